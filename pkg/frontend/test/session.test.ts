import { describe, expect, it } from "vitest";

import type { Hello, StatePacket } from "../src/protocol.js";
import {
  applyConnection,
  applyMessage,
  backoffDelayMs,
  buttonLabel,
  buttonsEnabled,
  initialView,
  PHASE_LABELS,
} from "../src/session.js";

function stateWithPhases(phases: [number, number, number]): StatePacket {
  return {
    kind: "state",
    simTimeS: 1.0,
    progress: 0.1,
    motors: phases.map((cyclePhase, i) => ({
      encoderCount: BigInt(i * 100),
      pwmDuty: cyclePhase === 0 ? 0 : 500,
      velocitySteps: 0,
      cyclePhase,
    })),
    fingerAngles: [[0, 0], [0, 0], [0, 0], [0, 0], [0, 0]],
  };
}

describe("session view", () => {
  it("starts connecting with buttons disabled", () => {
    const view = initialView();
    expect(view.status).toBe("connecting");
    expect(buttonsEnabled(view)).toBe(false);
    expect(buttonLabel(view, 0)).toBe("—");
  });

  it("labels follow the last state packet only", () => {
    let view = applyConnection(initialView(), "connected");
    view = applyMessage(view, stateWithPhases([1, 0, 3]));
    expect(buttonLabel(view, 0)).toBe("closing");
    expect(buttonLabel(view, 1)).toBe("idle");
    expect(buttonLabel(view, 2)).toBe("opening");
  });

  it("cycles through the four phase labels like four presses", () => {
    // mirrors the motor-side cycle: idle -> closing -> stopped -> opening -> idle
    let view = applyConnection(initialView(), "connected");
    const seen: string[] = [];
    for (const phase of [1, 2, 3, 0]) {
      view = applyMessage(view, stateWithPhases([phase, 0, 0]));
      seen.push(buttonLabel(view, 0));
    }
    expect(seen).toEqual(["closing", "stopped", "opening", "idle"]);
    expect(PHASE_LABELS).toHaveLength(4);
  });

  it("disconnect disables buttons and keeps the banner state", () => {
    let view = applyConnection(initialView(), "connected");
    view = applyMessage(view, stateWithPhases([1, 0, 0]));
    view = applyConnection(view, "disconnected");
    expect(buttonsEnabled(view)).toBe(false);
    expect(buttonLabel(view, 0)).toBe("—");
  });

  it("reconnect resets the view so it re-derives from fresh packets", () => {
    let view = applyConnection(initialView(), "connected");
    view = applyMessage(view, stateWithPhases([2, 2, 2]));
    view = applyConnection(view, "disconnected");
    view = applyConnection(view, "connected");
    expect(view.lastState).toBeNull();
    const hello: Hello = {
      kind: "hello", version: 1, speedFactor: 1, nMotors: 3, nCameras: 5,
      stateHz: 50, frameHz: 10,
    };
    view = applyMessage(view, hello);
    expect(view.hello).toEqual(hello);
  });

  it("records server errors", () => {
    let view = applyConnection(initialView(), "connected");
    view = applyMessage(view, { kind: "error", code: 1, message: "nope" });
    expect(view.lastError).toContain("nope");
  });
});

describe("backoff", () => {
  it("grows exponentially and caps at 10 s", () => {
    const delays = [0, 1, 2, 3, 4, 5, 6, 10].map(backoffDelayMs);
    expect(delays[0]).toBe(500);
    expect(delays[1]).toBe(1000);
    expect(delays[2]).toBe(2000);
    expect(delays[3]).toBe(4000);
    expect(delays[4]).toBe(8000);
    expect(Math.max(...delays)).toBeLessThanOrEqual(10_000);
    for (let i = 1; i < delays.length; i++) {
      expect(delays[i]).toBeGreaterThanOrEqual(delays[i - 1]);
    }
  });
});
