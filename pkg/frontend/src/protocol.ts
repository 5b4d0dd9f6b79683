// Session protocol: JSON records with a `type` tag, one per WebSocket message
// (or newline-delimited over raw TCP).  The server is lockstep: exactly one
// `state` reply per `control` message.

export interface StateMsg {
  type: "state";
  seq: number;
  x: number;
  y: number;
  theta: number;
  V_kmh: number;
  D: number;
  sigma: number;
  lap: number;
  ranges_preview: number[];
  termination: string;
}

export interface DemoSavedMsg {
  type: "demo_saved";
  path: string;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StateMsg | DemoSavedMsg | ErrorMsg;

export type ClientMsg =
  | { type: "hello"; track_id?: string; dt?: number }
  | { type: "control"; steering: number; torque: number; seq: number }
  | { type: "reset" }
  | { type: "record"; on: boolean };

const clamp = (v: number) => Math.max(-1, Math.min(1, v));

export function controlMsg(steering: number, torque: number, seq: number): ClientMsg {
  return { type: "control", steering: clamp(steering), torque: clamp(torque), seq };
}

export function parseServerMsg(text: string): ServerMsg {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return { type: "error", message: `unparseable message: ${text.slice(0, 80)}` };
  }
  const msg = raw as Record<string, unknown>;
  if (msg === null || typeof msg !== "object" || typeof msg.type !== "string") {
    return { type: "error", message: "message without a type field" };
  }
  if (msg.type === "state") {
    for (const field of ["seq", "x", "y", "theta", "V_kmh", "D", "sigma"]) {
      if (typeof msg[field] !== "number") {
        return { type: "error", message: `state message missing ${field}` };
      }
    }
    return msg as unknown as StateMsg;
  }
  if (msg.type === "demo_saved" && typeof msg.path === "string") {
    return msg as unknown as DemoSavedMsg;
  }
  if (msg.type === "error") {
    return { type: "error", message: String(msg.message ?? "unknown error") };
  }
  return { type: "error", message: `unknown server message type ${msg.type}` };
}

export function serialize(msg: ClientMsg): string {
  return JSON.stringify(msg);
}
