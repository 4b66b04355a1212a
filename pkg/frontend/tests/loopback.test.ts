/**
 * Loopback session against the real match server: spawns the Python
 * service, drives it through the same input mapper and session code the
 * browser uses (with scripted key/mouse events), and checks that rod
 * motion follows input within 3 ticks.
 */

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { InputMapper } from "../src/input";
import { KEEPER_ROD, ServerMessage, StateMessage } from "../src/protocol";
import { Session } from "../src/net";
import { SocketLike } from "../src/net";

const PORT = 8931;
let server: ChildProcess;

function wrapNodeSocket(ws: WebSocket): SocketLike {
  // The session attaches handlers after the socket may already be open, so
  // fire onopen immediately on assignment in that case.
  let onopen: (() => void) | null = null;
  const wrapped = {
    send: (d: string) => ws.send(d),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
    get onopen() { return onopen; },
    set onopen(fn: (() => void) | null) {
      onopen = fn;
      if (fn !== null && ws.readyState === WebSocket.OPEN) fn();
    },
  } as SocketLike;
  ws.on("open", () => wrapped.onopen?.());
  ws.on("message", (data) => wrapped.onmessage?.({ data: data.toString() }));
  ws.on("close", () => wrapped.onclose?.());
  return wrapped;
}

async function connectWithRetry(url: string, attempts = 50): Promise<WebSocket> {
  for (let i = 0; i < attempts; i++) {
    try {
      const ws = new WebSocket(url);
      await new Promise<void>((resolve, reject) => {
        ws.once("open", resolve);
        ws.once("error", reject);
      });
      return ws;
    } catch {
      await new Promise((r) => setTimeout(r, 200));
    }
  }
  throw new Error("server did not come up");
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "foosim.cli", "serve", "--port", String(PORT), "--seed", "12",
     "--time-limit", "120"],
    { stdio: "ignore" },
  );
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("loopback against the live server", () => {
  it(
    "joins, moves the keeper, kicks, and sees rod motion within 3 ticks",
    async () => {
      const ws = await connectWithRetry(`ws://127.0.0.1:${PORT}/ws`);
      const session = new Session(wrapNodeSocket(ws), "white");
      const states: StateMessage[] = [];
      const until = (pred: () => boolean, ms: number) =>
        new Promise<void>((resolve, reject) => {
          const t = setInterval(() => {
            if (pred()) { clearInterval(t); resolve(); }
          }, 5);
          setTimeout(() => { clearInterval(t); reject(new Error("timeout")); }, ms);
        });
      session.onMessage = (m: ServerMessage) => {
        if (m.type === "state") states.push(m);
      };
      await until(() => session.state.status === "joined", 10_000);
      await until(() => states.length > 5, 10_000);

      const rod = KEEPER_ROD.white;
      const input = new InputMapper([rod], 400);

      // Scripted mouse move to the top of the canvas -> prismatic +1.
      input.onMouseMove({ offsetY: 0 });
      const sentAtTick = states[states.length - 1].tick;
      const action = input.frameAction(0);
      expect(action).not.toBeNull();
      session.sendAction(action!);
      await until(
        () => states.some((s) => s.tick > sentAtTick && s.tick <= sentAtTick + 3
          && s.rods[rod].p_dot > 0),
        10_000,
      );

      // Scripted kick: spacebar, then one action per simulated frame.
      input.onKeyDown({ key: " " }, 1000);
      const kickTick = states[states.length - 1].tick;
      for (let t = 1000; t < 1400; t += 16) {
        const a = input.frameAction(t);
        if (a !== null) session.sendAction(a);
        await new Promise((r) => setTimeout(r, 16));
      }
      await until(
        () => states.some((s) => s.tick > kickTick && Math.abs(s.rods[rod].omega) > 1e-6),
        10_000,
      );
      const firstMotion = states.find(
        (s) => s.tick > kickTick && Math.abs(s.rods[rod].omega) > 1e-6,
      )!;
      expect(firstMotion.tick - kickTick).toBeLessThanOrEqual(3);

      session.close();
    },
    60_000,
  );
});
