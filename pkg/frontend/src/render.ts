/** Top-down table renderer over a minimal, mockable 2D-context surface. */

import {
  FIELD_LENGTH,
  FIELD_WIDTH,
  FIGURINE_COUNTS,
  GOAL_WIDTH,
  ROD_TEAM,
  ROD_X,
  StateMessage,
} from "./protocol";
import { ClientState } from "./state";

/** The subset of CanvasRenderingContext2D the renderer draws with. */
export interface Context2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Viewport {
  width: number;
  height: number;
}

const MARGIN = 24;

/** World (m, origin at table centre, y up) -> canvas pixels. */
export function worldToCanvas(
  x: number,
  y: number,
  vp: Viewport,
): [number, number] {
  const sx = (vp.width - 2 * MARGIN) / FIELD_LENGTH;
  const sy = (vp.height - 2 * MARGIN) / FIELD_WIDTH;
  const s = Math.min(sx, sy);
  return [vp.width / 2 + s * x, vp.height / 2 - s * y];
}

function scale(vp: Viewport): number {
  return Math.min(
    (vp.width - 2 * MARGIN) / FIELD_LENGTH,
    (vp.height - 2 * MARGIN) / FIELD_WIDTH,
  );
}

const TEAM_COLOR = { white: "#e8e8e8", black: "#303030" };

export function renderFrame(
  client: ClientState,
  ctx: Context2D,
  vp: Viewport,
  nowMs: number,
): void {
  ctx.fillStyle = "#186a3b";
  ctx.fillRect(0, 0, vp.width, vp.height);

  const state = client.interpolated(nowMs);
  if (state === null) {
    ctx.fillStyle = "#ffffff";
    ctx.font = "20px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("connecting…", vp.width / 2, vp.height / 2);
    return;
  }
  drawField(ctx, vp);
  drawRods(ctx, vp, state);
  drawBall(ctx, vp, state);
  drawScore(ctx, vp, state);
  drawEvents(ctx, vp, state);
}

function drawField(ctx: Context2D, vp: Viewport): void {
  const s = scale(vp);
  const [x0, y0] = worldToCanvas(-FIELD_LENGTH / 2, FIELD_WIDTH / 2, vp);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 2;
  ctx.strokeRect(x0, y0, s * FIELD_LENGTH, s * FIELD_WIDTH);
  // Centre line and goal mouths.
  ctx.beginPath();
  const [cx0, cy0] = worldToCanvas(0, FIELD_WIDTH / 2, vp);
  const [, cy1] = worldToCanvas(0, -FIELD_WIDTH / 2, vp);
  ctx.moveTo(cx0, cy0);
  ctx.lineTo(cx0, cy1);
  ctx.stroke();
  for (const side of [-1, 1]) {
    const [gx, gy] = worldToCanvas((side * FIELD_LENGTH) / 2, GOAL_WIDTH / 2, vp);
    ctx.strokeStyle = "#ffd700";
    ctx.strokeRect(gx - (side > 0 ? 0 : 6), gy, 6, s * GOAL_WIDTH);
    ctx.strokeStyle = "#ffffff";
  }
}

function drawRods(ctx: Context2D, vp: Viewport, state: StateMessage): void {
  const s = scale(vp);
  state.rods.forEach((rod, i) => {
    const [rx, ry0] = worldToCanvas(ROD_X[i], FIELD_WIDTH / 2, vp);
    const [, ry1] = worldToCanvas(ROD_X[i], -FIELD_WIDTH / 2, vp);
    ctx.strokeStyle = "#9a9a9a";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(rx, ry0);
    ctx.lineTo(rx, ry1);
    ctx.stroke();
    // Figurines: foot offset in x shows rotation, color cue shows kicking
    // (|theta| small = feet down / playable).
    const n = FIGURINE_COUNTS[i];
    const spacing = FIELD_WIDTH / (n + 1);
    const footDx = 0.04 * Math.sin(rod.theta);
    const playable = Math.abs(wrapAngle(rod.theta)) < 1.0;
    for (let f = 0; f < n; f++) {
      const baseY = FIELD_WIDTH / 2 - spacing * (f + 1);
      const [fx, fy] = worldToCanvas(ROD_X[i] + footDx, baseY + rod.p, vp);
      ctx.fillStyle = playable ? TEAM_COLOR[ROD_TEAM[i]] : "#8a4b4b";
      ctx.beginPath();
      ctx.arc(fx, fy, Math.max(0.016 * s, 3), 0, 2 * Math.PI);
      ctx.fill();
    }
  });
}

function wrapAngle(theta: number): number {
  const t = ((theta + Math.PI) % (2 * Math.PI) + 2 * Math.PI) % (2 * Math.PI);
  return t - Math.PI;
}

function drawBall(ctx: Context2D, vp: Viewport, state: StateMessage): void {
  const s = scale(vp);
  const [bx, by] = worldToCanvas(state.ball.x, state.ball.y, vp);
  ctx.fillStyle = "#f4f4f4";
  ctx.beginPath();
  ctx.arc(bx, by, Math.max(0.01725 * s, 3), 0, 2 * Math.PI);
  ctx.fill();
}

function drawScore(ctx: Context2D, vp: Viewport, state: StateMessage): void {
  ctx.fillStyle = "#ffffff";
  ctx.font = "24px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(
    `${state.score.white} : ${state.score.black}`,
    vp.width / 2,
    20,
  );
}

function drawEvents(ctx: Context2D, vp: Viewport, state: StateMessage): void {
  ctx.font = "16px sans-serif";
  ctx.textAlign = "center";
  state.events.forEach((ev, i) => {
    ctx.fillStyle = "#ffd700";
    ctx.fillText(String(ev.type), vp.width / 2, 44 + 18 * i);
  });
}
