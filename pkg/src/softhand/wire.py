"""Binary wire protocol for the live serve session.

Every message is a little-endian, length-prefixed binary record::

    u32 length      byte count of everything after this field
    u8  type        message tag
    ... body        fixed layout per type, documented in docs/wire-protocol.md

Types: 0x01 ButtonCommand (client to server), 0x02 StatePacket,
0x03 FramePacket, 0x04 Hello, 0x05 ErrorReply (server to client).
The layouts are frozen so that any client language can implement them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

PROTOCOL_VERSION = 1

MSG_BUTTON = 0x01
MSG_STATE = 0x02
MSG_FRAMES = 0x03
MSG_HELLO = 0x04
MSG_ERROR = 0x05

IMAGE_WIDTH, IMAGE_HEIGHT = 88, 72
IMAGE_BYTES = IMAGE_WIDTH * IMAGE_HEIGHT * 3  # 19008
MASK_BYTES = IMAGE_WIDTH * IMAGE_HEIGHT // 8  # 792, row-major, MSB first
N_MOTORS = 3
N_CAMERAS = 5

TILE_STATUS_OK = 0
TILE_STATUS_CORRUPT = 1


class WireError(ValueError):
    pass


def encode_message(msg_type: int, body: bytes) -> bytes:
    return struct.pack("<IB", len(body) + 1, msg_type) + body


def decode_message(data: bytes) -> tuple[int, bytes]:
    """Split one complete message; raises WireError on malformed input."""
    if len(data) < 5:
        raise WireError(f"message too short ({len(data)} bytes)")
    (length,) = struct.unpack_from("<I", data, 0)
    if length < 1 or 4 + length != len(data):
        raise WireError(f"length field {length} does not match {len(data)} bytes")
    return data[4], data[5:]


@dataclass(frozen=True)
class ButtonCommand:
    button_id: int  # 1..3
    action: int = 0  # 0 press, 1 release

    def encode(self) -> bytes:
        return encode_message(MSG_BUTTON, struct.pack("<BB", self.button_id, self.action))

    @classmethod
    def decode_body(cls, body: bytes) -> "ButtonCommand":
        if len(body) != 2:
            raise WireError(f"button body must be 2 bytes, got {len(body)}")
        button_id, action = struct.unpack("<BB", body)
        if button_id not in (1, 2, 3) or action not in (0, 1):
            raise WireError(f"bad button command ({button_id}, {action})")
        return cls(button_id, action)


@dataclass(frozen=True)
class MotorReadout:
    encoder_count: int
    pwm_duty: int
    velocity_steps: float
    cycle_phase: int  # 0 idle, 1 closing, 2 stopped, 3 opening


@dataclass(frozen=True)
class StatePacket:
    sim_time_s: float
    progress: float  # mean closing fraction in [0, 1]
    motors: tuple[MotorReadout, ...]
    finger_angles: tuple[tuple[float, float], ...]  # 5 x (mcp, pip) radians

    _MOTOR = struct.Struct("<qif B")
    _HEAD = struct.Struct("<df")

    def encode(self) -> bytes:
        body = bytearray(self._HEAD.pack(self.sim_time_s, self.progress))
        for m in self.motors:
            body += self._MOTOR.pack(
                m.encoder_count, m.pwm_duty, m.velocity_steps, m.cycle_phase
            )
        for mcp, pip in self.finger_angles:
            body += struct.pack("<ff", mcp, pip)
        return encode_message(MSG_STATE, bytes(body))

    @classmethod
    def decode_body(cls, body: bytes) -> "StatePacket":
        expect = cls._HEAD.size + N_MOTORS * cls._MOTOR.size + 5 * 8
        if len(body) != expect:
            raise WireError(f"state body {len(body)} != {expect}")
        sim_time, progress = cls._HEAD.unpack_from(body, 0)
        pos = cls._HEAD.size
        motors = []
        for _ in range(N_MOTORS):
            count, duty, vel, phase = cls._MOTOR.unpack_from(body, pos)
            motors.append(MotorReadout(count, duty, vel, phase))
            pos += cls._MOTOR.size
        fingers = []
        for _ in range(5):
            mcp, pip = struct.unpack_from("<ff", body, pos)
            fingers.append((mcp, pip))
            pos += 8
        return cls(sim_time, progress, tuple(motors), tuple(fingers))


@dataclass(frozen=True)
class FrameTile:
    camera_id: int
    status: int  # TILE_STATUS_*
    accuracy: float  # -1.0 when no ground truth available
    image: bytes  # RGB888, 19008 bytes
    mask: bytes  # bit-packed, 792 bytes


@dataclass(frozen=True)
class FramePacket:
    sim_time_s: float
    total_macs: int
    weight_bytes: int
    tiles: tuple[FrameTile, ...]

    _HEAD = struct.Struct("<dBHHQI")
    _TILE_HEAD = struct.Struct("<BBf")

    def encode(self) -> bytes:
        body = bytearray(
            self._HEAD.pack(
                self.sim_time_s,
                len(self.tiles),
                IMAGE_WIDTH,
                IMAGE_HEIGHT,
                self.total_macs,
                self.weight_bytes,
            )
        )
        for t in self.tiles:
            if len(t.image) != IMAGE_BYTES or len(t.mask) != MASK_BYTES:
                raise WireError("tile image/mask byte counts are fixed")
            body += self._TILE_HEAD.pack(t.camera_id, t.status, t.accuracy)
            body += t.image
            body += t.mask
        return encode_message(MSG_FRAMES, bytes(body))

    @classmethod
    def decode_body(cls, body: bytes) -> "FramePacket":
        sim_time, n_tiles, width, height, macs, wbytes = cls._HEAD.unpack_from(body, 0)
        if (width, height) != (IMAGE_WIDTH, IMAGE_HEIGHT):
            raise WireError(f"unexpected tile geometry {width}x{height}")
        pos = cls._HEAD.size
        tile_size = cls._TILE_HEAD.size + IMAGE_BYTES + MASK_BYTES
        if len(body) != cls._HEAD.size + n_tiles * tile_size:
            raise WireError("frame packet length mismatch")
        tiles = []
        for _ in range(n_tiles):
            camera_id, status, accuracy = cls._TILE_HEAD.unpack_from(body, pos)
            pos += cls._TILE_HEAD.size
            image = body[pos : pos + IMAGE_BYTES]
            pos += IMAGE_BYTES
            mask = body[pos : pos + MASK_BYTES]
            pos += MASK_BYTES
            tiles.append(FrameTile(camera_id, status, accuracy, image, mask))
        return cls(sim_time, macs, wbytes, tuple(tiles))


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION
    speed_factor: float = 1.0
    n_motors: int = N_MOTORS
    n_cameras: int = N_CAMERAS
    state_hz: int = 50
    frame_hz: int = 10

    _BODY = struct.Struct("<BfBBHH")

    def encode(self) -> bytes:
        return encode_message(
            MSG_HELLO,
            self._BODY.pack(
                self.version, self.speed_factor, self.n_motors,
                self.n_cameras, self.state_hz, self.frame_hz,
            ),
        )

    @classmethod
    def decode_body(cls, body: bytes) -> "Hello":
        return cls(*cls._BODY.unpack(body))


@dataclass(frozen=True)
class ErrorReply:
    code: int
    message: str

    def encode(self) -> bytes:
        text = self.message.encode("utf-8")
        return encode_message(MSG_ERROR, struct.pack("<BH", self.code, len(text)) + text)

    @classmethod
    def decode_body(cls, body: bytes) -> "ErrorReply":
        code, length = struct.unpack_from("<BH", body, 0)
        return cls(code, body[3 : 3 + length].decode("utf-8"))


_DECODERS = {
    MSG_BUTTON: ButtonCommand.decode_body,
    MSG_STATE: StatePacket.decode_body,
    MSG_FRAMES: FramePacket.decode_body,
    MSG_HELLO: Hello.decode_body,
    MSG_ERROR: ErrorReply.decode_body,
}


def decode(data: bytes):
    """Decode one complete message to its dataclass."""
    msg_type, body = decode_message(data)
    if msg_type not in _DECODERS:
        raise WireError(f"unknown message type 0x{msg_type:02x}")
    return _DECODERS[msg_type](body)


def pack_mask(mask: np.ndarray) -> bytes:
    """Bit-pack a (72, 88) boolean mask row-major, MSB first."""
    if mask.shape != (IMAGE_HEIGHT, IMAGE_WIDTH):
        raise WireError(f"mask shape {mask.shape} != ({IMAGE_HEIGHT}, {IMAGE_WIDTH})")
    return np.packbits(mask.astype(np.uint8)).tobytes()


def unpack_mask(data: bytes) -> np.ndarray:
    if len(data) != MASK_BYTES:
        raise WireError(f"mask must be {MASK_BYTES} bytes, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    return bits.reshape(IMAGE_HEIGHT, IMAGE_WIDTH).astype(bool)
