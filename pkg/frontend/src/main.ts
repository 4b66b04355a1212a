/** Browser entry point: connect, join white, render at 60 Hz, map inputs. */

import { InputMapper } from "./input";
import { KEEPER_ROD } from "./protocol";
import { Session } from "./net";
import { renderFrame } from "./render";

function start(): void {
  const canvas = document.getElementById("table") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2D canvas unsupported");

  const url = `ws://${location.host}/ws`;
  const session = new Session(new WebSocket(url) as never, "white");
  const input = new InputMapper([KEEPER_ROD.white], canvas.height);

  canvas.addEventListener("mousemove", (ev) => input.onMouseMove(ev));
  window.addEventListener("keydown", (ev) => {
    if (input.onKeyDown(ev, performance.now())) ev.preventDefault();
  });

  const frame = (nowMs: number) => {
    if (session.state.status === "joined") {
      const action = input.frameAction(nowMs);
      if (action !== null) session.sendAction(action);
    }
    renderFrame(session.state, ctx, canvas, nowMs);
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

start();
