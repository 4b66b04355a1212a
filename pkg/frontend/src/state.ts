/** Client-side match state: the two newest server states plus local input.
 *
 * Rendering only ever interpolates between received states; there is no
 * client-side physics.
 */

import { ServerMessage, Side, StateMessage } from "./protocol";

export type ConnectionStatus = "connecting" | "joined" | "ended" | "error";

export class ClientState {
  previous: StateMessage | null = null;
  latest: StateMessage | null = null;
  /** Local wall-clock ms at which `latest` arrived. */
  latestAt = 0;
  status: ConnectionStatus = "connecting";
  side: Side | null = null;
  selectedRod = 0;
  result: unknown = null;
  lastError: string | null = null;

  /** Fold one server message into the state; returns the message type. */
  apply(msg: ServerMessage, nowMs: number): string {
    switch (msg.type) {
      case "state":
        this.previous = this.latest;
        this.latest = msg;
        this.latestAt = nowMs;
        break;
      case "joined":
        this.status = "joined";
        this.side = msg.side;
        break;
      case "end":
        this.status = "ended";
        this.result = msg.result;
        break;
      case "error":
        this.status = "error";
        this.lastError = msg.reason;
        break;
    }
    return msg.type;
  }

  get score(): Record<Side, number> {
    return this.latest?.score ?? { white: 0, black: 0 };
  }

  /**
   * Interpolation factor in [0, 1] for the current frame: how far local
   * time has progressed from `previous` toward `latest`, assuming the
   * server's fixed tick interval.
   */
  interpolationAlpha(nowMs: number): number {
    if (this.previous === null || this.latest === null) return 1;
    const tickMs = 1000 * (this.latest.time_s - this.previous.time_s);
    if (tickMs <= 0) return 1;
    const alpha = (nowMs - this.latestAt) / tickMs;
    return Math.min(Math.max(alpha, 0), 1);
  }

  /** Linearly interpolated view between the two newest states. */
  interpolated(nowMs: number): StateMessage | null {
    if (this.latest === null) return null;
    if (this.previous === null) return this.latest;
    const a = this.interpolationAlpha(nowMs);
    const p = this.previous;
    const l = this.latest;
    const mix = (x: number, y: number) => x + (y - x) * a;
    return {
      ...l,
      ball: {
        x: mix(p.ball.x, l.ball.x),
        y: mix(p.ball.y, l.ball.y),
        vx: mix(p.ball.vx, l.ball.vx),
        vy: mix(p.ball.vy, l.ball.vy),
      },
      rods: l.rods.map((r, i) => ({
        p: mix(p.rods[i].p, r.p),
        p_dot: mix(p.rods[i].p_dot, r.p_dot),
        theta: mix(p.rods[i].theta, r.theta),
        omega: mix(p.rods[i].omega, r.omega),
      })),
    };
  }
}
