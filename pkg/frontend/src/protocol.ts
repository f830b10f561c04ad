/**
 * Binary wire protocol of the live serve session (client side).
 *
 * Every message is little-endian: u32 length (bytes after the field),
 * u8 type tag, then a fixed body per type.  The layouts mirror
 * docs/wire-protocol.md in the repository root; both sides implement the
 * same document byte for byte.
 */

export const MSG_BUTTON = 0x01;
export const MSG_STATE = 0x02;
export const MSG_FRAMES = 0x03;
export const MSG_HELLO = 0x04;
export const MSG_ERROR = 0x05;

export const IMAGE_WIDTH = 88;
export const IMAGE_HEIGHT = 72;
export const IMAGE_BYTES = IMAGE_WIDTH * IMAGE_HEIGHT * 3;
export const MASK_BYTES = (IMAGE_WIDTH * IMAGE_HEIGHT) / 8;
export const TILE_STATUS_OK = 0;
export const TILE_STATUS_CORRUPT = 1;

export class WireError extends Error {}

export interface MotorReadout {
  encoderCount: bigint;
  pwmDuty: number;
  velocitySteps: number;
  cyclePhase: number; // 0 idle, 1 closing, 2 stopped, 3 opening
}

export interface StatePacket {
  kind: "state";
  simTimeS: number;
  progress: number;
  motors: MotorReadout[];
  fingerAngles: Array<[number, number]>;
}

export interface FrameTile {
  cameraId: number;
  status: number;
  accuracy: number; // -1 when no ground truth
  image: Uint8Array; // RGB888
  mask: Uint8Array; // bit-packed, MSB first
}

export interface FramePacket {
  kind: "frames";
  simTimeS: number;
  totalMacs: bigint;
  weightBytes: number;
  tiles: FrameTile[];
}

export interface Hello {
  kind: "hello";
  version: number;
  speedFactor: number;
  nMotors: number;
  nCameras: number;
  stateHz: number;
  frameHz: number;
}

export interface ErrorReply {
  kind: "error";
  code: number;
  message: string;
}

export type ServerMessage = StatePacket | FramePacket | Hello | ErrorReply;

const N_MOTORS = 3;
const N_FINGERS = 5;
const STATE_BODY_SIZE = 12 + N_MOTORS * 17 + N_FINGERS * 8;
const FRAME_HEAD_SIZE = 8 + 1 + 2 + 2 + 8 + 4;
const TILE_HEAD_SIZE = 1 + 1 + 4;

export function encodeButtonCommand(buttonId: number, action = 0): Uint8Array {
  if (buttonId < 1 || buttonId > 3) throw new WireError(`bad button id ${buttonId}`);
  const out = new Uint8Array(7);
  const view = new DataView(out.buffer);
  view.setUint32(0, 3, true);
  view.setUint8(4, MSG_BUTTON);
  view.setUint8(5, buttonId);
  view.setUint8(6, action);
  return out;
}

export function decodeMessage(data: ArrayBuffer): ServerMessage {
  if (data.byteLength < 5) throw new WireError(`message too short (${data.byteLength})`);
  const view = new DataView(data);
  const length = view.getUint32(0, true);
  if (length < 1 || length + 4 !== data.byteLength) {
    throw new WireError(`length field ${length} does not match ${data.byteLength} bytes`);
  }
  const type = view.getUint8(4);
  const body = new DataView(data, 5);
  switch (type) {
    case MSG_STATE:
      return decodeState(body);
    case MSG_FRAMES:
      return decodeFrames(body, new Uint8Array(data, 5));
    case MSG_HELLO:
      return decodeHello(body);
    case MSG_ERROR:
      return decodeError(body, new Uint8Array(data, 5));
    default:
      throw new WireError(`unknown message type 0x${type.toString(16)}`);
  }
}

function decodeState(view: DataView): StatePacket {
  if (view.byteLength !== STATE_BODY_SIZE) {
    throw new WireError(`state body ${view.byteLength} != ${STATE_BODY_SIZE}`);
  }
  const simTimeS = view.getFloat64(0, true);
  const progress = view.getFloat32(8, true);
  let pos = 12;
  const motors: MotorReadout[] = [];
  for (let m = 0; m < N_MOTORS; m++) {
    motors.push({
      encoderCount: view.getBigInt64(pos, true),
      pwmDuty: view.getInt32(pos + 8, true),
      velocitySteps: view.getFloat32(pos + 12, true),
      cyclePhase: view.getUint8(pos + 16),
    });
    pos += 17;
  }
  const fingerAngles: Array<[number, number]> = [];
  for (let f = 0; f < N_FINGERS; f++) {
    fingerAngles.push([view.getFloat32(pos, true), view.getFloat32(pos + 4, true)]);
    pos += 8;
  }
  return { kind: "state", simTimeS, progress, motors, fingerAngles };
}

function decodeFrames(view: DataView, bytes: Uint8Array): FramePacket {
  const simTimeS = view.getFloat64(0, true);
  const nTiles = view.getUint8(8);
  const width = view.getUint16(9, true);
  const height = view.getUint16(11, true);
  if (width !== IMAGE_WIDTH || height !== IMAGE_HEIGHT) {
    throw new WireError(`unexpected tile geometry ${width}x${height}`);
  }
  const totalMacs = view.getBigUint64(13, true);
  const weightBytes = view.getUint32(21, true);
  const tileSize = TILE_HEAD_SIZE + IMAGE_BYTES + MASK_BYTES;
  if (view.byteLength !== FRAME_HEAD_SIZE + nTiles * tileSize) {
    throw new WireError("frame packet length mismatch");
  }
  const tiles: FrameTile[] = [];
  let pos = FRAME_HEAD_SIZE;
  for (let t = 0; t < nTiles; t++) {
    const cameraId = view.getUint8(pos);
    const status = view.getUint8(pos + 1);
    const accuracy = view.getFloat32(pos + 2, true);
    const image = bytes.slice(pos + TILE_HEAD_SIZE, pos + TILE_HEAD_SIZE + IMAGE_BYTES);
    const mask = bytes.slice(
      pos + TILE_HEAD_SIZE + IMAGE_BYTES,
      pos + TILE_HEAD_SIZE + IMAGE_BYTES + MASK_BYTES,
    );
    tiles.push({ cameraId, status, accuracy, image, mask });
    pos += tileSize;
  }
  return { kind: "frames", simTimeS, totalMacs, weightBytes, tiles };
}

function decodeHello(view: DataView): Hello {
  if (view.byteLength !== 11) throw new WireError(`hello body ${view.byteLength} != 11`);
  return {
    kind: "hello",
    version: view.getUint8(0),
    speedFactor: view.getFloat32(1, true),
    nMotors: view.getUint8(5),
    nCameras: view.getUint8(6),
    stateHz: view.getUint16(7, true),
    frameHz: view.getUint16(9, true),
  };
}

function decodeError(view: DataView, bytes: Uint8Array): ErrorReply {
  const code = view.getUint8(0);
  const length = view.getUint16(1, true);
  const text = new TextDecoder().decode(bytes.slice(3, 3 + length));
  return { kind: "error", code, message: text };
}

/** Expand a bit-packed mask (MSB first, row-major) to one byte per pixel. */
export function unpackMask(mask: Uint8Array): Uint8Array {
  if (mask.length !== MASK_BYTES) throw new WireError(`mask must be ${MASK_BYTES} bytes`);
  const out = new Uint8Array(IMAGE_WIDTH * IMAGE_HEIGHT);
  for (let i = 0; i < mask.length; i++) {
    const byte = mask[i];
    for (let b = 0; b < 8; b++) {
      out[i * 8 + b] = (byte >> (7 - b)) & 1;
    }
  }
  return out;
}

// --- test-support encoders (mirror the server side) -------------------------

export function encodeStatePacket(packet: Omit<StatePacket, "kind">): Uint8Array {
  const out = new Uint8Array(5 + STATE_BODY_SIZE);
  const view = new DataView(out.buffer);
  view.setUint32(0, 1 + STATE_BODY_SIZE, true);
  view.setUint8(4, MSG_STATE);
  view.setFloat64(5, packet.simTimeS, true);
  view.setFloat32(13, packet.progress, true);
  let pos = 17;
  for (const motor of packet.motors) {
    view.setBigInt64(pos, motor.encoderCount, true);
    view.setInt32(pos + 8, motor.pwmDuty, true);
    view.setFloat32(pos + 12, motor.velocitySteps, true);
    view.setUint8(pos + 16, motor.cyclePhase);
    pos += 17;
  }
  for (const [mcp, pip] of packet.fingerAngles) {
    view.setFloat32(pos, mcp, true);
    view.setFloat32(pos + 4, pip, true);
    pos += 8;
  }
  return out;
}

export function encodeFramePacket(packet: Omit<FramePacket, "kind">): Uint8Array {
  const tileSize = TILE_HEAD_SIZE + IMAGE_BYTES + MASK_BYTES;
  const bodySize = FRAME_HEAD_SIZE + packet.tiles.length * tileSize;
  const out = new Uint8Array(5 + bodySize);
  const view = new DataView(out.buffer);
  view.setUint32(0, 1 + bodySize, true);
  view.setUint8(4, MSG_FRAMES);
  view.setFloat64(5, packet.simTimeS, true);
  view.setUint8(13, packet.tiles.length);
  view.setUint16(14, IMAGE_WIDTH, true);
  view.setUint16(16, IMAGE_HEIGHT, true);
  view.setBigUint64(18, packet.totalMacs, true);
  view.setUint32(26, packet.weightBytes, true);
  let pos = 5 + FRAME_HEAD_SIZE;
  for (const tile of packet.tiles) {
    if (tile.image.length !== IMAGE_BYTES || tile.mask.length !== MASK_BYTES) {
      throw new WireError("tile image/mask byte counts are fixed");
    }
    view.setUint8(pos, tile.cameraId);
    view.setUint8(pos + 1, tile.status);
    view.setFloat32(pos + 2, tile.accuracy, true);
    out.set(tile.image, pos + TILE_HEAD_SIZE);
    out.set(tile.mask, pos + TILE_HEAD_SIZE + IMAGE_BYTES);
    pos += tileSize;
  }
  return out;
}

export function encodeHello(hello: Omit<Hello, "kind">): Uint8Array {
  const out = new Uint8Array(5 + 11);
  const view = new DataView(out.buffer);
  view.setUint32(0, 12, true);
  view.setUint8(4, MSG_HELLO);
  view.setUint8(5, hello.version);
  view.setFloat32(6, hello.speedFactor, true);
  view.setUint8(10, hello.nMotors);
  view.setUint8(11, hello.nCameras);
  view.setUint16(12, hello.stateHz, true);
  view.setUint16(14, hello.frameHz, true);
  return out;
}
