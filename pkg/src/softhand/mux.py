"""Bounded-buffer serializer for the five camera streams, plus fault injection.

Whole frames arrive per 50 ms tick (camera order 0..4 within a tick), are
held in a block-RAM-sized buffer, and drain onto a single serial link.
The link budget is enforced as a payload-byte allowance per tick window so
the sustained rate never exceeds the configured cap.  A frame that would
overflow the buffer is dropped on arrival (drop-newest) and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import deque

import numpy as np

from .framing import Frame, encode_frame

BRAM_CAPACITY_BYTES = 330 * 1024  # 337920
LINK_RATE_BPS = 100_000_000
TICK_S = 0.05  # one 20 fps frame period


class MuxError(ValueError):
    pass


@dataclass
class BufferBudget:
    """Occupancy accounting for the shared frame buffer, in payload bytes."""

    capacity: int = BRAM_CAPACITY_BYTES
    occupancy: int = 0
    drop_count: int = 0
    max_occupancy: int = 0

    def try_admit(self, nbytes: int) -> bool:
        if self.occupancy + nbytes > self.capacity:
            self.drop_count += 1
            return False
        self.occupancy += nbytes
        self.max_occupancy = max(self.max_occupancy, self.occupancy)
        return True

    def release(self, nbytes: int) -> None:
        self.occupancy -= nbytes
        assert self.occupancy >= 0


@dataclass
class MuxStats:
    """Throughput and loss accounting for one serialization run."""

    ticks: int = 0
    admitted_frames: int = 0
    emitted_frames: int = 0
    dropped_frames: int = 0
    emitted_payload_bytes: int = 0
    emitted_stream_bytes: int = 0
    max_occupancy: int = 0
    per_camera_emitted: list[int] = field(default_factory=lambda: [0] * 5)

    @property
    def duration_s(self) -> float:
        return self.ticks * TICK_S

    @property
    def payload_bitrate_bps(self) -> float:
        if self.ticks == 0:
            return 0.0
        return self.emitted_payload_bytes * 8 / self.duration_s


@dataclass
class MuxStream:
    """Serialized byte stream of encoded frames plus its statistics."""

    data: bytes
    stats: MuxStats

    def write(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.data)


def mux_serialize(
    sources: list[list[Frame | None]],
    budget: BufferBudget | None = None,
    rate_bps: int = LINK_RATE_BPS,
) -> MuxStream:
    """Interleave per-tick camera frames through the bounded buffer.

    ``sources`` holds one arrival list per camera; entry t is the frame that
    camera delivers in tick t (None for no frame).  Within a tick, arrivals
    are admitted in camera order, then the link drains whole frames FIFO
    against a token allowance refilled at the link rate.  The bucket is
    normally capped at one tick's worth of bytes; it only grows past that
    while the head frame is larger than a whole tick window, so the
    long-run emitted rate can never exceed ``rate_bps``.  After the last
    arrival the buffer keeps draining until empty.
    """
    if len(sources) == 0 or len(sources) > 5:
        raise MuxError("expected 1..5 camera sources")
    budget = budget if budget is not None else BufferBudget()
    stats = MuxStats()
    queue: deque[Frame] = deque()
    out = bytearray()
    allowance_per_tick = int(rate_bps * TICK_S / 8)
    if allowance_per_tick <= 0:
        raise MuxError(f"link rate {rate_bps} too low for a {TICK_S}s tick")
    tokens = 0

    n_ticks = max((len(s) for s in sources), default=0)
    tick = 0
    while True:
        for cam, feed in enumerate(sources):
            frame = feed[tick] if tick < len(feed) else None
            if frame is None:
                continue
            if frame.camera_id != cam:
                raise MuxError(f"source {cam} delivered frame tagged {frame.camera_id}")
            if budget.try_admit(frame.payload_bytes):
                queue.append(frame)
                stats.admitted_frames += 1
        cap = max(allowance_per_tick, queue[0].payload_bytes if queue else 0)
        tokens = min(tokens + allowance_per_tick, cap)
        while queue and queue[0].payload_bytes <= tokens:
            frame = queue.popleft()
            tokens -= frame.payload_bytes
            budget.release(frame.payload_bytes)
            encoded = encode_frame(frame)
            out += encoded
            stats.emitted_frames += 1
            stats.emitted_payload_bytes += frame.payload_bytes
            stats.emitted_stream_bytes += len(encoded)
            stats.per_camera_emitted[frame.camera_id] += 1
        stats.ticks = tick + 1
        tick += 1
        if tick >= n_ticks and not queue:
            break
    stats.dropped_frames = budget.drop_count
    stats.max_occupancy = budget.max_occupancy
    return MuxStream(data=bytes(out), stats=stats)


def qcif_camera_feeds(
    n_ticks: int, seed: int = 0, cameras: tuple[int, ...] = (0, 1, 2, 3, 4)
) -> list[list[Frame | None]]:
    """Five synthetic 176x144 RGB565 feeds at one frame per tick (20 fps)."""
    from .framing import PixelFormat, QCIF_WIDTH, QCIF_HEIGHT

    rng = np.random.default_rng(seed)
    feeds: list[list[Frame | None]] = [[None] * n_ticks for _ in range(5)]
    size = QCIF_WIDTH * QCIF_HEIGHT * 2
    for cam in cameras:
        for t in range(n_ticks):
            payload = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
            feeds[cam][t] = Frame(cam, t, QCIF_WIDTH, QCIF_HEIGHT, PixelFormat.RGB565, payload)
    return feeds


# --- fault injection -------------------------------------------------------


@dataclass(frozen=True)
class BitErrorRate:
    """Flip each stream bit independently with probability ``rate``."""

    rate: float


@dataclass(frozen=True)
class PartialFrame:
    """Truncate the packet at ``frame_index`` to ``keep_fraction`` of its bytes."""

    frame_index: int
    keep_fraction: float = 0.5


@dataclass(frozen=True)
class DeadAfterCycles:
    """Reproduce the camera-link wearout signature.

    Packets for cycles < first_corrupt pass clean; cycles in
    [first_corrupt, dead_from) have a few payload bytes corrupted; from
    dead_from on the link is silent and nothing is emitted.
    """

    first_corrupt: int
    dead_from: int


FaultPolicy = BitErrorRate | PartialFrame | DeadAfterCycles


def inject_fault(packets: list[bytes], policy: FaultPolicy, seed: int = 0) -> bytes:
    """Apply a deterministic fault policy to a sequence of encoded packets.

    Packet index is the actuation cycle for the wearout policy.  Returns the
    degraded concatenated stream.
    """
    rng = np.random.default_rng(seed)
    out = bytearray()
    if isinstance(policy, BitErrorRate):
        if not 0.0 <= policy.rate <= 1.0:
            raise MuxError("bit error rate must be in [0, 1]")
        for packet in packets:
            if policy.rate == 0.0:
                out += packet
                continue
            arr = np.frombuffer(packet, dtype=np.uint8).copy()
            flips = rng.random((arr.size, 8)) < policy.rate
            mask = np.packbits(flips, axis=1, bitorder="little")[:, 0]
            out += (arr ^ mask).tobytes()
    elif isinstance(policy, PartialFrame):
        for i, packet in enumerate(packets):
            if i == policy.frame_index:
                out += packet[: max(1, int(len(packet) * policy.keep_fraction))]
            else:
                out += packet
    elif isinstance(policy, DeadAfterCycles):
        if not 0 <= policy.first_corrupt <= policy.dead_from:
            raise MuxError("need 0 <= first_corrupt <= dead_from")
        for cycle, packet in enumerate(packets):
            if cycle >= policy.dead_from:
                break
            if cycle < policy.first_corrupt:
                out += packet
            else:
                arr = np.frombuffer(packet, dtype=np.uint8).copy()
                n = max(1, arr.size // 64)
                pos = rng.integers(0, arr.size, n)
                arr[pos] ^= np.asarray(rng.integers(1, 256, n), dtype=np.uint8)
                out += arr.tobytes()
    else:
        raise MuxError(f"unknown fault policy {policy!r}")
    return bytes(out)
