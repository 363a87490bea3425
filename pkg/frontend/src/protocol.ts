/**
 * Wire protocol shared with the guidance service. One JSON text frame per
 * message over a single bidirectional socket; snapshots broadcast at the
 * control rate (10 Hz), heartbeats every second.
 */

export const STATE_DIM = 26;
export const NUM_BLOCKS = 8;

// Board geometry (meters) mirrored from the simulator for drawing only;
// the client never simulates physics.
export const BOARD_W = 0.6096;
export const BOARD_H = 0.4572;
export const BLOCK_RADIUS = 0.02;
export const EE_RADIUS = 0.012;

export type SessionMode = "realtime" | "open_loop";

export interface CreateMsg {
  type: "create";
  mode: SessionMode;
  checkpoint: string;
  seed: number;
  goal?: string;
}

export interface InstructionMsg {
  type: "instruction";
  session: string;
  text: string;
}

export interface PlanMsg {
  type: "plan";
  session: string;
  texts: string[];
}

export interface ResetMsg {
  type: "reset";
  session: string;
  seed: number;
}

export interface SubscribeMsg {
  type: "subscribe";
  session: string;
}

export type ClientMsg = CreateMsg | InstructionMsg | PlanMsg | ResetMsg | SubscribeMsg;

export interface SnapshotMsg {
  type: "snapshot";
  session: string;
  tick: number;
  state: number[];
  instruction: string;
  status: "running" | "paused" | "done";
  done: boolean;
}

export interface CreatedMsg {
  type: "created";
  session: string;
  mode: SessionMode;
}

export interface AckMsg {
  type: "ack";
  session: string;
  tick: number;
}

export interface HeartbeatMsg {
  type: "heartbeat";
  t: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
  request?: string;
}

export type ServerMsg = SnapshotMsg | CreatedMsg | AckMsg | HeartbeatMsg | ErrorMsg
  | { type: "subscribed"; session: string }
  | { type: "reset"; session: string; tick: number };

export function parseServerMsg(raw: string): ServerMsg | null {
  try {
    const msg = JSON.parse(raw);
    return typeof msg === "object" && msg && typeof msg.type === "string" ? msg : null;
  } catch {
    return null;
  }
}

/** Block pose (x, y, theta) for id 0..7 plus the EE point, from a state vector. */
export function decodeState(state: number[]) {
  const blocks = [];
  for (let i = 0; i < NUM_BLOCKS; i++) {
    blocks.push({ x: state[3 * i], y: state[3 * i + 1], theta: state[3 * i + 2] });
  }
  return { blocks, ee: { x: state[24], y: state[25] } };
}

// Stable block identities (same ids as the service).
export const BLOCK_STYLE: { color: string; shape: string }[] = [
  { color: "green", shape: "circle" },
  { color: "red", shape: "circle" },
  { color: "green", shape: "star" },
  { color: "red", shape: "star" },
  { color: "blue", shape: "triangle" },
  { color: "yellow", shape: "heart" },
  { color: "yellow", shape: "hexagon" },
  { color: "blue", shape: "cube" },
];

export const COLOR_RGB: Record<string, string> = {
  red: "rgb(220,50,47)",
  blue: "rgb(38,105,226)",
  green: "rgb(60,160,70)",
  yellow: "rgb(230,200,40)",
};
