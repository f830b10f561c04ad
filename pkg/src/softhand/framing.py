"""Camera-interface packet framing: markers, byte stuffing, CRC-32, resync.

One encoded frame looks like::

    FRAME_START  stuffed(header)
    LINE_START   stuffed(row 0)
    ...
    LINE_START   stuffed(row h-1)
    FRAME_END    stuffed(crc32)

``header`` is 10 bytes, little-endian: camera_id u8, frame_counter u32,
width u16, height u16, pixel_format u8 (0 = RGB565, 1 = RGB888).  The CRC-32
(zlib polynomial) covers the unstuffed header plus all row bytes.  Marker
bytes inside data are escaped as (ESC, byte XOR 0x20), so an unescaped
marker in the stream is always a genuine frame boundary: the decoder can
resynchronize at the next frame start after arbitrary corruption.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import imageio

FRAME_START = 0xC0
LINE_START = 0xC1
FRAME_END = 0xC2
ESC = 0xDB
ESC_XOR = 0x20

_HEADER = struct.Struct("<BIHHB")
QCIF_WIDTH, QCIF_HEIGHT = 176, 144
DOWNSAMPLED_WIDTH, DOWNSAMPLED_HEIGHT = 88, 72
MAX_DIM = 4096


class FramingError(ValueError):
    pass


class PixelFormat(IntEnum):
    RGB565 = 0  # 2 bytes/px, little-endian u16
    RGB888 = 1  # 3 bytes/px

    @property
    def bytes_per_pixel(self) -> int:
        return 2 if self is PixelFormat.RGB565 else 3


@dataclass(frozen=True)
class Frame:
    """One camera image plus its stream identity."""

    camera_id: int
    frame_counter: int
    width: int
    height: int
    pixel_format: PixelFormat
    pixels: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.camera_id <= 4:
            raise FramingError(f"camera_id must be 0..4, got {self.camera_id}")
        if not 0 <= self.frame_counter <= 0xFFFFFFFF:
            raise FramingError("frame_counter out of u32 range")
        if not (0 < self.width <= MAX_DIM and 0 < self.height <= MAX_DIM):
            raise FramingError(f"bad dimensions {self.width}x{self.height}")
        expect = self.width * self.height * self.pixel_format.bytes_per_pixel
        if len(self.pixels) != expect:
            raise FramingError(
                f"payload is {len(self.pixels)} bytes, expected {expect}"
            )

    @property
    def payload_bytes(self) -> int:
        return len(self.pixels)

    @classmethod
    def from_array(
        cls,
        image: np.ndarray,
        camera_id: int,
        frame_counter: int,
        pixel_format: PixelFormat = PixelFormat.RGB888,
    ) -> "Frame":
        h, w = image.shape[:2]
        if pixel_format is PixelFormat.RGB888:
            payload = np.ascontiguousarray(image, dtype=np.uint8).tobytes()
        else:
            payload = imageio.rgb888_to_rgb565(image)
        return cls(camera_id, frame_counter, w, h, pixel_format, payload)

    def to_array(self) -> np.ndarray:
        """Pixels as (h, w, 3) uint8 RGB, converting from RGB565 if needed."""
        if self.pixel_format is PixelFormat.RGB888:
            arr = np.frombuffer(self.pixels, dtype=np.uint8)
            return arr.reshape(self.height, self.width, 3)
        return imageio.rgb565_to_rgb888(self.pixels, self.height, self.width)


@dataclass(frozen=True)
class SyncLoss:
    """Decoder lost framing; stream is re-acquired at the next frame start."""

    offset: int  # byte offset in the input where the failure was detected
    reason: str  # "framing" | "header" | "crc" | "eos"


def _stuff(data: np.ndarray) -> np.ndarray:
    special = (
        (data == FRAME_START) | (data == LINE_START) | (data == FRAME_END) | (data == ESC)
    )
    idx = np.flatnonzero(special)
    if idx.size == 0:
        return data
    out = np.insert(data, idx, ESC)
    out[idx + 1 + np.arange(idx.size)] ^= ESC_XOR
    return out


def _unstuff(seg: np.ndarray) -> np.ndarray | None:
    """Reverse _stuff; None when the escape structure is invalid."""
    esc = np.flatnonzero(seg == ESC)
    if esc.size == 0:
        return seg
    if esc[-1] == seg.size - 1 or np.any(np.diff(esc) == 1):
        return None
    targets = esc + 1
    vals = seg[targets] ^ ESC_XOR
    valid = (
        (vals == FRAME_START) | (vals == LINE_START) | (vals == FRAME_END) | (vals == ESC)
    )
    if not valid.all():
        return None
    out = seg.copy()
    out[targets] = vals
    return np.delete(out, esc)


def encode_frame(frame: Frame) -> bytes:
    """Serialize one frame to its marker-delimited, stuffed byte form."""
    header = _HEADER.pack(
        frame.camera_id,
        frame.frame_counter,
        frame.width,
        frame.height,
        int(frame.pixel_format),
    )
    payload = np.frombuffer(frame.pixels, dtype=np.uint8)
    rows = payload.reshape(frame.height, -1)
    crc = binascii.crc32(header + frame.pixels)

    parts = [np.array([FRAME_START], dtype=np.uint8), _stuff(np.frombuffer(header, np.uint8))]
    line_marker = np.array([LINE_START], dtype=np.uint8)
    for row in rows:
        parts.append(line_marker)
        parts.append(_stuff(row))
    parts.append(np.array([FRAME_END], dtype=np.uint8))
    parts.append(_stuff(np.frombuffer(struct.pack("<I", crc), np.uint8)))
    return np.concatenate(parts).tobytes()


def _true_marker_positions(buf: np.ndarray) -> np.ndarray:
    """Positions of unescaped marker bytes (escapedness = odd run of ESC before)."""
    if buf.size == 0:
        return np.empty(0, dtype=np.int64)
    idx = np.arange(buf.size, dtype=np.int64)
    last_nonesc = np.maximum.accumulate(np.where(buf != ESC, idx, -1))
    run_before = np.empty(buf.size, dtype=np.int64)
    run_before[0] = 0
    run_before[1:] = idx[1:] - 1 - last_nonesc[:-1]
    is_marker = (buf == FRAME_START) | (buf == LINE_START) | (buf == FRAME_END)
    return np.flatnonzero(is_marker & (run_before % 2 == 0))


def _take_unstuffed(buf: np.ndarray, start: int, stop: int, count: int):
    """Unstuff up to ``count`` bytes from buf[start:stop]; (bytes, consumed) or None."""
    out = bytearray()
    i = start
    while len(out) < count:
        if i >= stop:
            return None
        b = int(buf[i])
        if b == ESC:
            if i + 1 >= stop:
                return None
            v = int(buf[i + 1]) ^ ESC_XOR
            if v not in (FRAME_START, LINE_START, FRAME_END, ESC):
                return None
            out.append(v)
            i += 2
        elif b in (FRAME_START, LINE_START, FRAME_END):
            return None
        else:
            out.append(b)
            i += 1
    return bytes(out), i - start


def decode_stream(data: bytes) -> list[Frame | SyncLoss]:
    """Decode a byte stream into frames and sync-loss events, in order.

    Tolerates arbitrary input: structural or CRC failures yield SyncLoss
    events and scanning resumes at the next unescaped frame-start marker.
    A corrupted frame is never silently accepted.
    """
    buf = np.frombuffer(data, dtype=np.uint8)
    markers = _true_marker_positions(buf)
    starts = markers[buf[markers] == FRAME_START] if markers.size else markers
    events: list[Frame | SyncLoss] = []
    cursor = 0
    start_idx = 0  # index into starts

    def next_start(after: int) -> int:
        nonlocal start_idx
        while start_idx < starts.size and starts[start_idx] < after:
            start_idx += 1
        return int(starts[start_idx]) if start_idx < starts.size else -1

    while cursor < buf.size:
        fs = next_start(cursor)
        if fs < 0:
            events.append(SyncLoss(offset=cursor, reason="eos"))
            break
        if fs > cursor:
            events.append(SyncLoss(offset=cursor, reason="framing"))
            cursor = fs
        event, cursor = _parse_frame_at(buf, markers, fs)
        events.append(event)
        if isinstance(event, SyncLoss):
            # the failed region is consumed up to the next frame start
            nxt = next_start(cursor)
            cursor = nxt if nxt >= 0 else buf.size
    return events


def _parse_frame_at(buf, markers, fs):
    """Parse one frame starting at frame-start position fs.

    Returns (Frame | SyncLoss, next_cursor); on failure the cursor moves
    just past fs so scanning resumes at the following frame start.
    """
    fail_cursor = fs + 1
    span = markers[np.searchsorted(markers, fs + 1) :]

    def fail(reason: str, offset: int = fs):
        return SyncLoss(offset=offset, reason=reason), fail_cursor

    if span.size == 0:
        return fail("eos")
    # header segment runs to the first following marker
    first = int(span[0])
    header_seg = _unstuff(buf[fs + 1 : first])
    if header_seg is None or header_seg.size != _HEADER.size:
        return fail("framing")
    camera_id, counter, width, height, fmt = _HEADER.unpack(header_seg.tobytes())
    if fmt not in (0, 1) or not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        return fail("header")
    if camera_id > 4:
        return fail("header")
    row_bytes = width * PixelFormat(fmt).bytes_per_pixel

    rows: list[np.ndarray] = []
    pos = 0  # index into span
    while True:
        if pos >= span.size:
            return fail("eos")
        m = int(span[pos])
        kind = int(buf[m])
        if kind == FRAME_START:
            return fail("framing")
        if kind == FRAME_END:
            break
        seg_end = int(span[pos + 1]) if pos + 1 < span.size else buf.size
        row = _unstuff(buf[m + 1 : seg_end])
        if row is None or row.size != row_bytes:
            return fail("framing", offset=m)
        rows.append(row)
        pos += 1
    if len(rows) != height:
        return fail("header")
    frame_end = int(span[pos])
    stop = int(span[pos + 1]) if pos + 1 < span.size else buf.size
    got = _take_unstuffed(buf, frame_end + 1, stop, 4)
    if got is None:
        return fail("eos" if stop == buf.size else "framing", offset=frame_end)
    crc_bytes, consumed = got
    next_cursor = frame_end + 1 + consumed
    payload = np.concatenate(rows).tobytes() if rows else b""
    crc = binascii.crc32(header_seg.tobytes() + payload)
    if crc != struct.unpack("<I", crc_bytes)[0]:
        return SyncLoss(offset=fs, reason="crc"), next_cursor
    frame = Frame(camera_id, counter, width, height, PixelFormat(fmt), payload)
    return frame, next_cursor


def dcmi_decode(data: bytes) -> Frame | SyncLoss:
    """Decode the first frame of a stream (SyncLoss on empty/invalid input)."""
    events = decode_stream(data)
    if not events:
        return SyncLoss(offset=0, reason="eos")
    return events[0]


def dcmi_encode(frame: Frame) -> bytes:
    """Alias of encode_frame for symmetry with dcmi_decode."""
    return encode_frame(frame)


def downsample_2x2(frame: Frame) -> Frame:
    """Average 2x2 pixel blocks per channel (round half up); output RGB888."""
    if frame.width % 2 or frame.height % 2:
        raise FramingError(
            f"downsample needs even dimensions, got {frame.width}x{frame.height}"
        )
    img = frame.to_array().astype(np.uint16)
    h, w = img.shape[:2]
    blocks = img.reshape(h // 2, 2, w // 2, 2, 3)
    summed = blocks.sum(axis=(1, 3), dtype=np.uint16)
    mean = ((summed + 2) // 4).astype(np.uint8)
    return Frame.from_array(
        mean, frame.camera_id, frame.frame_counter, PixelFormat.RGB888
    )
