/**
 * Session view state: pure reducers over incoming packets, so the panel can
 * be re-derived from the next packets after any reload or reconnect.
 */

import type { FramePacket, Hello, ServerMessage, StatePacket } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface SessionView {
  status: ConnectionStatus;
  hello: Hello | null;
  lastState: StatePacket | null;
  lastFrames: FramePacket | null;
  lastError: string | null;
  /** commands sent but not yet reflected by a state packet */
  pendingPresses: number;
}

export function initialView(): SessionView {
  return {
    status: "connecting",
    hello: null,
    lastState: null,
    lastFrames: null,
    lastError: null,
    pendingPresses: 0,
  };
}

export function applyMessage(view: SessionView, msg: ServerMessage): SessionView {
  switch (msg.kind) {
    case "hello":
      return { ...view, hello: msg };
    case "state":
      return { ...view, lastState: msg, pendingPresses: 0 };
    case "frames":
      return { ...view, lastFrames: msg };
    case "error":
      return { ...view, lastError: `server: ${msg.message}` };
  }
}

export function applyConnection(view: SessionView, status: ConnectionStatus): SessionView {
  if (status === "connected") {
    return { ...initialView(), status };
  }
  return { ...view, status };
}

export const PHASE_LABELS = ["idle", "closing", "stopped", "opening"] as const;

/** Button label for a motor, straight from the last state packet. */
export function buttonLabel(view: SessionView, motorIndex: number): string {
  const state = view.lastState;
  if (view.status !== "connected" || state === null) return "—";
  const phase = state.motors[motorIndex]?.cyclePhase ?? 0;
  return PHASE_LABELS[phase] ?? "?";
}

export function buttonsEnabled(view: SessionView): boolean {
  return view.status === "connected";
}

/** Reconnect delay with exponential backoff, capped at 10 s. */
export function backoffDelayMs(attempt: number): number {
  const base = 500 * 2 ** Math.min(attempt, 4);
  return Math.min(base, 10_000);
}
