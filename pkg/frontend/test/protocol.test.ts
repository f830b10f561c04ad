import { createHash } from "node:crypto";
import { describe, expect, it } from "vitest";

import {
  IMAGE_BYTES,
  MASK_BYTES,
  decodeMessage,
  encodeButtonCommand,
  encodeFramePacket,
  encodeHello,
  encodeStatePacket,
  unpackMask,
  WireError,
} from "../src/protocol.js";

function fromHex(hex: string): ArrayBuffer {
  const bytes = new Uint8Array(hex.length / 2);
  for (let i = 0; i < bytes.length; i++) {
    bytes[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return bytes.buffer;
}

function toHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

// Golden byte vectors produced by the server-side implementation; the two
// codebases must agree on these byte for byte.
const GOLDEN_BUTTON = "03000000010200";
const GOLDEN_HELLO = "0c00000004010000c03f030532000a00";
const GOLDEN_STATE =
  "680000000200000000000004400000803e60ea00000000000024faffff2000004801f4ffffff" +
  "ffffffffb80b0000000000bf020000000000000000000000000000000000cdcccc3dcdcc4c3e" +
  "9a99993ecdcccc3e0000003f9a99193f3333333fcdcc4c3f6666663f0000803f";
const GOLDEN_ERROR = "0f00000005070b00626164206d657373616765";
const GOLDEN_FRAME_LEN = 99060;
const GOLDEN_FRAME_HEAD64 =
  "f082010003000000000000f83f05580048000026fc0100000000f81c0000000000000000000" +
  "102030405060708090a0b0c0d0e0f101112131415161718191a1b";
const GOLDEN_FRAME_SHA256 =
  "e749c78393b863635b497c19d28f808f3d9ee1ba0f34ba457b343e7bf3aae0dd";

describe("golden vectors from the server implementation", () => {
  it("button command bytes match", () => {
    expect(toHex(encodeButtonCommand(2))).toBe(GOLDEN_BUTTON);
  });

  it("hello decodes", () => {
    const msg = decodeMessage(fromHex(GOLDEN_HELLO));
    expect(msg.kind).toBe("hello");
    if (msg.kind !== "hello") return;
    expect(msg.version).toBe(1);
    expect(msg.speedFactor).toBeCloseTo(1.5);
    expect(msg.nMotors).toBe(3);
    expect(msg.nCameras).toBe(5);
    expect(msg.stateHz).toBe(50);
    expect(msg.frameHz).toBe(10);
    expect(toHex(encodeHello(msg))).toBe(GOLDEN_HELLO);
  });

  it("state packet decodes and re-encodes", () => {
    const msg = decodeMessage(fromHex(GOLDEN_STATE));
    expect(msg.kind).toBe("state");
    if (msg.kind !== "state") return;
    expect(msg.simTimeS).toBe(2.5);
    expect(msg.progress).toBeCloseTo(0.25);
    expect(msg.motors[0].encoderCount).toBe(60000n);
    expect(msg.motors[0].pwmDuty).toBe(-1500);
    expect(msg.motors[0].velocitySteps).toBeCloseTo(131072.5);
    expect(msg.motors[0].cyclePhase).toBe(1);
    expect(msg.motors[1].encoderCount).toBe(-12n);
    expect(msg.motors[1].cyclePhase).toBe(2);
    expect(msg.fingerAngles[4][1]).toBeCloseTo(1.0);
    expect(toHex(encodeStatePacket(msg))).toBe(GOLDEN_STATE);
  });

  it("error reply decodes", () => {
    const msg = decodeMessage(fromHex(GOLDEN_ERROR));
    expect(msg).toEqual({ kind: "error", code: 7, message: "bad message" });
  });

  it("frame packet built here hashes to the server golden", () => {
    const tiles = [];
    for (let cam = 0; cam < 5; cam++) {
      const image = new Uint8Array(IMAGE_BYTES);
      for (let i = 0; i < IMAGE_BYTES; i++) image[i] = (cam * 7 + i) % 256;
      // mask bit set where pixel index % 3 == 0, MSB-first packing
      const mask = new Uint8Array(MASK_BYTES);
      for (let p = 0; p < IMAGE_BYTES / 3; p++) {
        if (p % 3 === 0) mask[p >> 3] |= 0x80 >> (p & 7);
      }
      tiles.push({ cameraId: cam, status: cam % 2, accuracy: 0.25 * cam, image, mask });
    }
    const encoded = encodeFramePacket({
      simTimeS: 1.5,
      totalMacs: 33302016n,
      weightBytes: 7416,
      tiles,
    });
    expect(encoded.length).toBe(GOLDEN_FRAME_LEN);
    expect(toHex(encoded.slice(0, 64))).toBe(GOLDEN_FRAME_HEAD64);
    expect(createHash("sha256").update(encoded).digest("hex")).toBe(GOLDEN_FRAME_SHA256);
    // and it round-trips through our decoder
    const decoded = decodeMessage(encoded.buffer as ArrayBuffer);
    expect(decoded.kind).toBe("frames");
    if (decoded.kind !== "frames") return;
    expect(decoded.totalMacs).toBe(33302016n);
    expect(decoded.weightBytes).toBe(7416);
    expect(decoded.tiles).toHaveLength(5);
    expect(decoded.tiles[3].accuracy).toBeCloseTo(0.75);
  });
});

describe("malformed input", () => {
  it("rejects short buffers", () => {
    expect(() => decodeMessage(new Uint8Array([1, 0]).buffer)).toThrow(WireError);
  });

  it("rejects length mismatches", () => {
    const bytes = new Uint8Array(fromHex(GOLDEN_STATE));
    const view = new DataView(bytes.buffer);
    view.setUint32(0, 9999, true);
    expect(() => decodeMessage(bytes.buffer)).toThrow(WireError);
  });

  it("rejects unknown types", () => {
    expect(() => decodeMessage(fromHex("01000000ee"))).toThrow(WireError);
  });

  it("rejects bad button ids at encode time", () => {
    expect(() => encodeButtonCommand(4)).toThrow(WireError);
  });
});

describe("mask unpacking", () => {
  it("expands MSB-first row-major bits", () => {
    const mask = new Uint8Array(MASK_BYTES);
    mask[0] = 0x80; // pixel (0, 0)
    mask[1] = 0x01; // pixel index 15
    const bits = unpackMask(mask);
    expect(bits[0]).toBe(1);
    expect(bits[1]).toBe(0);
    expect(bits[15]).toBe(1);
    expect(bits.reduce((a, b) => a + b, 0)).toBe(2);
  });

  it("rejects wrong sizes", () => {
    expect(() => unpackMask(new Uint8Array(10))).toThrow(WireError);
  });
});
