"""Symmetric 8-bit weight quantization and the on-disk weights format.

Each kernel is quantized per layer to signed bytes with a single scale:
q = round(w / scale) clipped to [-127, 127], scale = max|w| / 127.  The
stored payload is exactly one byte per weight; biases stay full precision.
The byte-exact file layout is documented in docs/weights-format.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import LAYER_NAMES, NetShape, SegNetError, SegNetWeights

MAGIC = b"\x89SQW"
VERSION = 1


@dataclass
class QuantizedWeights:
    """Per-layer int8 kernels with dequantization scales, plus f32 biases."""

    kernels: dict[str, np.ndarray]  # int8, same shapes as the float kernels
    scales: dict[str, float]
    biases: dict[str, np.ndarray]  # float32
    shape: NetShape = field(default_factory=NetShape)

    def payload_bytes(self) -> int:
        """Quantized kernel payload: one byte per weight, biases excluded."""
        return sum(int(np.prod(k.shape)) for k in self.kernels.values())


def quantize(weights: SegNetWeights) -> QuantizedWeights:
    kernels: dict[str, np.ndarray] = {}
    scales: dict[str, float] = {}
    for name in LAYER_NAMES:
        w = weights.kernels[name]
        if not np.all(np.isfinite(w)):
            raise SegNetError(f"{name}: cannot quantize non-finite weights")
        peak = float(np.max(np.abs(w)))
        scale = peak / 127.0 if peak > 0.0 else 1.0
        q = np.clip(np.round(w / scale), -127, 127).astype(np.int8)
        kernels[name] = q
        scales[name] = scale
    biases = {k: v.astype(np.float32) for k, v in weights.biases.items()}
    return QuantizedWeights(kernels=kernels, scales=scales, biases=biases, shape=weights.shape)


def dequantize(qweights: QuantizedWeights, dtype=np.float32) -> SegNetWeights:
    kernels = {
        name: (q.astype(dtype) * dtype(qweights.scales[name]))
        for name, q in qweights.kernels.items()
    }
    biases = {k: v.astype(dtype) for k, v in qweights.biases.items()}
    return SegNetWeights(kernels=kernels, biases=biases, shape=qweights.shape)


def save_weights(path: str | Path, qweights: QuantizedWeights) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BB", VERSION, len(LAYER_NAMES))
    for name in LAYER_NAMES:
        kernel = qweights.kernels[name]
        out += struct.pack("<B", len(name))
        out += name.encode("ascii")
        out += struct.pack("<4H", *kernel.shape)
        out += struct.pack("<f", qweights.scales[name])
        out += kernel.tobytes()
    for name in LAYER_NAMES:
        out += qweights.biases[name].astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_weights(path: str | Path) -> QuantizedWeights:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise SegNetError(f"{path}: not a weights file")
    version, n_layers = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise SegNetError(f"{path}: unsupported version {version}")
    if n_layers != len(LAYER_NAMES):
        raise SegNetError(f"{path}: expected {len(LAYER_NAMES)} layers, got {n_layers}")
    pos = 6
    kernels: dict[str, np.ndarray] = {}
    scales: dict[str, float] = {}
    dims: dict[str, tuple[int, ...]] = {}
    for _ in range(n_layers):
        (name_len,) = struct.unpack_from("<B", data, pos)
        pos += 1
        name = data[pos : pos + name_len].decode("ascii")
        pos += name_len
        if name not in LAYER_NAMES:
            raise SegNetError(f"{path}: unknown layer {name!r}")
        kshape = struct.unpack_from("<4H", data, pos)
        pos += 8
        (scale,) = struct.unpack_from("<f", data, pos)
        pos += 4
        count = int(np.prod(kshape))
        kernels[name] = np.frombuffer(data, dtype=np.int8, count=count, offset=pos).reshape(kshape)
        scales[name] = scale
        dims[name] = kshape
        pos += count
    biases: dict[str, np.ndarray] = {}
    for name in LAYER_NAMES:
        c_out = dims[name][3]
        biases[name] = np.frombuffer(data, dtype="<f4", count=c_out, offset=pos).copy()
        pos += 4 * c_out
    if pos != len(data):
        raise SegNetError(f"{path}: {len(data) - pos} trailing bytes")
    shape = NetShape(
        in_channels=dims["conv1"][2],
        trunk_channels=dims["conv1"][3],
        head_channels=dims["conv4"][3],
    )
    return QuantizedWeights(kernels=kernels, scales=scales, biases=biases, shape=shape)
