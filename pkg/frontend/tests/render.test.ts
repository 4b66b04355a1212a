import { describe, expect, it } from "vitest";

import { StateMessage } from "../src/protocol";
import { Context2D, renderFrame, worldToCanvas } from "../src/render";
import { ClientState } from "../src/state";

/** Recording fake of the 2D context: keeps every draw call. */
class FakeContext implements Context2D {
  fillStyle: Context2D["fillStyle"] = "";
  strokeStyle: Context2D["strokeStyle"] = "";
  lineWidth = 1;
  font = "";
  textAlign: CanvasTextAlign = "left";
  calls: { op: string; args: unknown[] }[] = [];

  private rec(op: string, ...args: unknown[]) {
    this.calls.push({ op, args });
  }
  fillRect(...a: number[]) { this.rec("fillRect", ...a); }
  strokeRect(...a: number[]) { this.rec("strokeRect", ...a); }
  beginPath() { this.rec("beginPath"); }
  arc(...a: number[]) { this.rec("arc", ...a); }
  moveTo(...a: number[]) { this.rec("moveTo", ...a); }
  lineTo(...a: number[]) { this.rec("lineTo", ...a); }
  fill() { this.rec("fill"); }
  stroke() { this.rec("stroke"); }
  fillText(text: string, x: number, y: number) { this.rec("fillText", text, x, y); }

  texts(): string[] {
    return this.calls.filter((c) => c.op === "fillText").map((c) => String(c.args[0]));
  }
}

const VP = { width: 900, height: 540 };

function stateMsg(extra: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    protocol_version: 1,
    tick: 1,
    time_s: 1 / 60,
    ball: { x: 0, y: 0, vx: 0, vy: 0 },
    rods: Array.from({ length: 8 }, () => ({ p: 0, p_dot: 0, theta: 0, omega: 0 })),
    score: { white: 0, black: 0 },
    events: [],
    ...extra,
  };
}

describe("worldToCanvas", () => {
  it("maps the world origin to the canvas centre", () => {
    expect(worldToCanvas(0, 0, VP)).toEqual([450, 270]);
  });

  it("maps +y up (smaller canvas y)", () => {
    const [, yUp] = worldToCanvas(0, 0.2, VP);
    expect(yUp).toBeLessThan(270);
  });
});

describe("renderFrame", () => {
  it("shows a connecting placeholder before any state arrives", () => {
    const ctx = new FakeContext();
    renderFrame(new ClientState(), ctx, VP, 0);
    expect(ctx.texts().some((t) => t.startsWith("connecting"))).toBe(true);
  });

  it("draws the ball at canvas centre for a world-origin ball", () => {
    const cs = new ClientState();
    cs.apply(stateMsg(), 0);
    const ctx = new FakeContext();
    renderFrame(cs, ctx, VP, 0);
    const arcs = ctx.calls.filter((c) => c.op === "arc");
    const centred = arcs.filter(
      (c) => Math.abs((c.args[0] as number) - 450) < 1e-9
        && Math.abs((c.args[1] as number) - 270) < 1e-9,
    );
    expect(centred.length).toBeGreaterThan(0);
  });

  it("draws one figurine arc per figurine plus the ball", () => {
    const cs = new ClientState();
    cs.apply(stateMsg(), 0);
    const ctx = new FakeContext();
    renderFrame(cs, ctx, VP, 0);
    const arcs = ctx.calls.filter((c) => c.op === "arc");
    expect(arcs.length).toBe(22 + 1); // 22 figurines + ball
  });

  it("renders the score from the newest state", () => {
    const cs = new ClientState();
    cs.apply(stateMsg({ score: { white: 3, black: 1 } }), 0);
    const ctx = new FakeContext();
    renderFrame(cs, ctx, VP, 0);
    expect(ctx.texts()).toContain("3 : 1");
  });

  it("score overlay updates within one frame of a goal event", () => {
    const cs = new ClientState();
    cs.apply(stateMsg(), 0);
    cs.apply(
      stateMsg({
        tick: 2,
        time_s: 2 / 60,
        score: { white: 1, black: 0 },
        events: [{ type: "goal", against: "black" }],
      }),
      17,
    );
    const ctx = new FakeContext();
    renderFrame(cs, ctx, VP, 17);
    expect(ctx.texts()).toContain("1 : 0");
    expect(ctx.texts()).toContain("goal");
  });
});
