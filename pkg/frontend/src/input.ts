/** Keyboard/mouse to rod-action mapping.
 *
 * Mouse y (or arrow keys) drives the selected rod's prismatic target in
 * [-1, 1]; the kick key plays a canned revolute flick profile (wind-up to
 * -0.3, strike to +1, return to 0); Tab / number keys select among owned
 * rods.  `frameAction` emits at most one action message per animation
 * frame.
 */

import { ActionMessage, actionMessage, RodActionEntry } from "./protocol";

export interface KickProfile {
  windupValue: number;
  strikeValue: number;
  windupMs: number;
  strikeMs: number;
  returnMs: number;
}

export const DEFAULT_KICK: KickProfile = {
  windupValue: -0.3,
  strikeValue: 1.0,
  windupMs: 60,
  strikeMs: 50,
  returnMs: 80,
};

/** Revolute setpoint at `tMs` since the kick started; null when finished. */
export function kickValue(profile: KickProfile, tMs: number): number | null {
  const { windupValue, strikeValue, windupMs, strikeMs, returnMs } = profile;
  if (tMs < 0) return null;
  if (tMs < windupMs) return windupValue * (tMs / windupMs);
  if (tMs < windupMs + strikeMs) {
    const a = (tMs - windupMs) / strikeMs;
    return windupValue + (strikeValue - windupValue) * a;
  }
  if (tMs < windupMs + strikeMs + returnMs) {
    const a = (tMs - windupMs - strikeMs) / returnMs;
    return strikeValue * (1 - a);
  }
  return null; // profile finished -> caller emits a final 0 and stops
}

export interface KeyEventLike {
  key: string;
}

export interface MouseEventLike {
  /** Vertical position inside the canvas, px. */
  offsetY: number;
}

const ARROW_STEP = 0.08;

export class InputMapper {
  ownedRods: number[];
  selected: number;
  prismatic = 0;
  kick: KickProfile;
  canvasHeight: number;
  private kickStartedAt: number | null = null;
  private kickDone = false;
  private dirty = true;

  constructor(
    ownedRods: number[],
    canvasHeight: number,
    kick: KickProfile = DEFAULT_KICK,
  ) {
    if (ownedRods.length === 0) throw new Error("no owned rods");
    this.ownedRods = [...ownedRods];
    this.selected = this.ownedRods[0];
    this.canvasHeight = canvasHeight;
    this.kick = kick;
  }

  /** Returns true when the event changed input state (for tests/UI). */
  onKeyDown(ev: KeyEventLike, nowMs: number): boolean {
    const k = ev.key;
    if (k === "Tab") {
      const i = this.ownedRods.indexOf(this.selected);
      this.selected = this.ownedRods[(i + 1) % this.ownedRods.length];
      this.dirty = true;
      return true;
    }
    if (k >= "1" && k <= "8") {
      const rod = Number(k) - 1;
      if (this.ownedRods.includes(rod)) {
        this.selected = rod;
        this.dirty = true;
        return true;
      }
      return false;
    }
    if (k === "ArrowUp" || k === "ArrowDown") {
      const dir = k === "ArrowUp" ? 1 : -1;
      this.prismatic = Math.min(Math.max(this.prismatic + dir * ARROW_STEP, -1), 1);
      this.dirty = true;
      return true;
    }
    if (k === " " || k === "k") {
      if (this.kickStartedAt === null) {
        this.kickStartedAt = nowMs;
        this.kickDone = false;
        this.dirty = true;
      }
      return true;
    }
    return false;
  }

  onMouseMove(ev: MouseEventLike): void {
    // Canvas top = +y side of the table = prismatic +1.
    const h = this.canvasHeight;
    const norm = 1 - 2 * Math.min(Math.max(ev.offsetY, 0), h) / h;
    this.prismatic = norm;
    this.dirty = true;
  }

  get kicking(): boolean {
    return this.kickStartedAt !== null;
  }

  /**
   * Action message for this animation frame, or null when nothing changed
   * (so callers send at most one message per frame and stay silent when
   * idle).
   */
  frameAction(nowMs: number): ActionMessage | null {
    let revolute: number | null = null;
    if (this.kickStartedAt !== null) {
      revolute = kickValue(this.kick, nowMs - this.kickStartedAt);
      if (revolute === null) {
        revolute = 0; // final setpoint ending the flick
        this.kickStartedAt = null;
        this.kickDone = true;
      }
      this.dirty = true;
    }
    if (!this.dirty) return null;
    this.dirty = false;
    const entry: RodActionEntry = { rod: this.selected, prismatic: this.prismatic };
    if (revolute !== null) entry.revolute = revolute;
    else if (this.kickDone) entry.revolute = 0;
    return actionMessage([entry]);
  }
}
