/** Wire protocol spoken with the match server (JSON text frames). */

export const PROTOCOL_VERSION = 1;

export type Side = "white" | "black";

export interface BallState {
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export interface RodState {
  p: number;
  p_dot: number;
  theta: number;
  omega: number;
}

export interface StateMessage {
  type: "state";
  protocol_version: number;
  tick: number;
  time_s: number;
  ball: BallState;
  rods: RodState[];
  score: Record<Side, number>;
  events: { type: string; [key: string]: unknown }[];
}

export interface JoinedMessage {
  type: "joined";
  protocol_version: number;
  side: Side;
}

export interface EndMessage {
  type: "end";
  protocol_version: number;
  result: unknown;
}

export interface ErrorMessage {
  type: "error";
  protocol_version: number;
  reason: string;
}

export type ServerMessage = StateMessage | JoinedMessage | EndMessage | ErrorMessage;

export interface RodActionEntry {
  rod: number;
  prismatic?: number;
  revolute?: number;
}

export interface ActionMessage {
  type: "action";
  protocol_version: number;
  rods: RodActionEntry[];
}

export interface JoinMessage {
  type: "join";
  protocol_version: number;
  side: Side;
}

export function joinMessage(side: Side): JoinMessage {
  return { type: "join", protocol_version: PROTOCOL_VERSION, side };
}

export function actionMessage(rods: RodActionEntry[]): ActionMessage {
  return { type: "action", protocol_version: PROTOCOL_VERSION, rods };
}

/** Rods owned by each side in the keeper-vs-keeper match. */
export const KEEPER_ROD: Record<Side, number> = { white: 0, black: 7 };

/** Rod x positions (m, world frame), fixed table geometry. */
export const ROD_X = [-0.525, -0.375, -0.225, -0.075, 0.075, 0.225, 0.375, 0.525];

export const ROD_TEAM: Side[] = [
  "white", "white", "black", "white", "black", "white", "black", "black",
];

export const FIGURINE_COUNTS = [1, 2, 3, 5, 5, 3, 2, 1];

export const FIELD_LENGTH = 1.2;
export const FIELD_WIDTH = 0.68;
export const GOAL_WIDTH = 0.205;
