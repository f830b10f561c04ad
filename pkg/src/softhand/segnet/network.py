"""Network definition, forward pass, and the exact resource ledger.

Layer chain (default shape, input width 88 x height 72 x 3 channels):

    conv1 3x3x3x16  -> ReLU                      88 x 72 x 16
    conv2 3x3x16x16 -> ReLU   (saved as skip)    88 x 72 x 16
    maxpool 4x4                                  22 x 18 x 16
    conv3 3x3x16x16 -> ReLU                      22 x 18 x 16
    upsample x4 (nearest)                        88 x 72 x 16
    concat(upsampled, skip)                      88 x 72 x 32
    conv4 3x3x32x8  -> ReLU                      88 x 72 x 8
    conv5 3x3x8x1   -> sigmoid -> threshold      88 x 72 x 1

MACs per convolution are h*w*c_out*(3*3*c_in); activation byte counts are
quoted at one byte per value (the on-target quantized activation width).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers

LAYER_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5")

INPUT_WIDTH, INPUT_HEIGHT = 88, 72
MASK_THRESHOLD = 0.5


class SegNetError(ValueError):
    pass


@dataclass(frozen=True)
class NetShape:
    """Channel widths; spatial sizes follow from the input and pool factor."""

    in_channels: int = 3
    trunk_channels: int = 16
    head_channels: int = 8
    pool_factor: int = 4

    def kernel_shapes(self) -> dict[str, tuple[int, int, int, int]]:
        t, h = self.trunk_channels, self.head_channels
        return {
            "conv1": (3, 3, self.in_channels, t),
            "conv2": (3, 3, t, t),
            "conv3": (3, 3, t, t),
            "conv4": (3, 3, 2 * t, h),
            "conv5": (3, 3, h, 1),
        }


DEFAULT_SHAPE = NetShape()


@dataclass
class SegNetWeights:
    """Full-precision kernels and biases for the five convolutions."""

    kernels: dict[str, np.ndarray]
    biases: dict[str, np.ndarray]
    shape: NetShape = field(default_factory=NetShape)

    def __post_init__(self) -> None:
        expected = self.shape.kernel_shapes()
        for name in LAYER_NAMES:
            if name not in self.kernels or name not in self.biases:
                raise SegNetError(f"missing weights for {name}")
            if tuple(self.kernels[name].shape) != expected[name]:
                raise SegNetError(
                    f"{name} kernel shape {self.kernels[name].shape} != {expected[name]}"
                )
            if self.biases[name].shape != (expected[name][3],):
                raise SegNetError(f"{name} bias shape mismatch")
            if not np.all(np.isfinite(self.kernels[name])):
                raise SegNetError(f"{name} kernel has non-finite values")

    @classmethod
    def initialize(
        cls, shape: NetShape = DEFAULT_SHAPE, seed: int = 0, dtype=np.float32
    ) -> "SegNetWeights":
        """He-normal kernels, zero biases, from a seeded generator."""
        rng = np.random.default_rng(seed)
        kernels, biases = {}, {}
        for name, kshape in shape.kernel_shapes().items():
            fan_in = 9 * kshape[2]
            std = np.sqrt(2.0 / fan_in)
            kernels[name] = (rng.standard_normal(kshape) * std).astype(dtype)
            biases[name] = np.zeros(kshape[3], dtype=dtype)
        return cls(kernels=kernels, biases=biases, shape=shape)

    def astype(self, dtype) -> "SegNetWeights":
        return SegNetWeights(
            kernels={k: v.astype(dtype) for k, v in self.kernels.items()},
            biases={k: v.astype(dtype) for k, v in self.biases.items()},
            shape=self.shape,
        )

    def weight_count(self) -> int:
        return sum(int(np.prod(k.shape)) for k in self.kernels.values())


def conv_macs(height: int, width: int, c_in: int, c_out: int) -> int:
    """Multiply-accumulates of one same-padded 3x3 convolution."""
    return height * width * c_out * 9 * c_in


@dataclass
class ResourceLedger:
    """Exact per-layer cost accounting for one forward pass."""

    per_layer_macs: dict[str, int]
    activation_bytes: dict[str, int]  # at 1 byte per value
    weight_payload_bytes: int

    @property
    def total_macs(self) -> int:
        return sum(self.per_layer_macs.values())

    @property
    def peak_activation_bytes(self) -> int:
        return max(self.activation_bytes.values())


def resource_ledger(
    shape: NetShape = DEFAULT_SHAPE,
    height: int = INPUT_HEIGHT,
    width: int = INPUT_WIDTH,
) -> ResourceLedger:
    t, hd = shape.trunk_channels, shape.head_channels
    f = shape.pool_factor
    hp, wp = height // f, width // f
    macs = {
        "conv1": conv_macs(height, width, shape.in_channels, t),
        "conv2": conv_macs(height, width, t, t),
        "conv3": conv_macs(hp, wp, t, t),
        "conv4": conv_macs(height, width, 2 * t, hd),
        "conv5": conv_macs(height, width, hd, 1),
    }
    act = {
        "input": height * width * shape.in_channels,
        "conv1": height * width * t,
        "conv2": height * width * t,
        "maxpool": hp * wp * t,
        "conv3": hp * wp * t,
        "upsample": height * width * t,
        "concat": height * width * 2 * t,
        "conv4": height * width * hd,
        "conv5": height * width * 1,
    }
    weight_bytes = sum(
        int(np.prod(s)) for s in shape.kernel_shapes().values()
    )  # one byte per weight in the quantized form
    return ResourceLedger(macs, act, weight_bytes)


def conv2d_3x3_same(image: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Single-image same convolution (h, w, c_in) -> (h, w, c_out)."""
    img = np.asarray(image)
    if img.ndim != 3:
        raise SegNetError(f"expected (h, w, c) input, got shape {img.shape}")
    if kernel.shape[2] != img.shape[2]:
        raise SegNetError(
            f"kernel expects {kernel.shape[2]} channels, input has {img.shape[2]}"
        )
    y, _ = layers.conv3x3_forward(img[None], kernel, bias)
    return y[0]


def maxpool_4x4(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.shape[0] % 4 or img.shape[1] % 4:
        raise SegNetError(f"dimensions {img.shape[:2]} not divisible by 4")
    y, _ = layers.maxpool_forward(img[None], 4)
    return y[0]


def upsample_4x(image: np.ndarray) -> np.ndarray:
    return layers.upsample_forward(np.asarray(image)[None], 4)[0]


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[:2] != b.shape[:2]:
        raise SegNetError(f"spatial mismatch {a.shape[:2]} vs {b.shape[:2]}")
    return layers.concat_forward(a[None], b[None])[0]


@dataclass
class ForwardResult:
    probabilities: np.ndarray  # (h, w) in (0, 1)
    mask: np.ndarray  # (h, w) bool, probability strictly above threshold
    ledger: ResourceLedger
    activations: dict[str, np.ndarray] | None = None


def batch_forward(x: np.ndarray, weights: SegNetWeights, want_cache: bool = False):
    """Forward a (b, h, w, c) batch; returns (probabilities, cache-or-None)."""
    k, b_ = weights.kernels, weights.biases
    f = weights.shape.pool_factor
    z1, c1 = layers.conv3x3_forward(x, k["conv1"], b_["conv1"])
    a1, m1 = layers.relu_forward(z1)
    z2, c2 = layers.conv3x3_forward(a1, k["conv2"], b_["conv2"])
    skip, m2 = layers.relu_forward(z2)
    p, cp = layers.maxpool_forward(skip, f)
    z3, c3 = layers.conv3x3_forward(p, k["conv3"], b_["conv3"])
    a3, m3 = layers.relu_forward(z3)
    up = layers.upsample_forward(a3, f)
    cc = layers.concat_forward(up, skip)
    z4, c4 = layers.conv3x3_forward(cc, k["conv4"], b_["conv4"])
    a4, m4 = layers.relu_forward(z4)
    z5, c5 = layers.conv3x3_forward(a4, k["conv5"], b_["conv5"])
    prob = layers.sigmoid(z5)
    cache = None
    if want_cache:
        cache = {
            "c1": c1, "m1": m1, "c2": c2, "m2": m2, "cp": cp,
            "c3": c3, "m3": m3, "c4": c4, "m4": m4, "c5": c5,
            "trunk": weights.shape.trunk_channels, "pool": f,
        }
    return prob, cache


def batch_backward(d_prob_logits: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Backpropagate d(loss)/d(conv5 pre-sigmoid) to all parameter gradients."""
    grads: dict[str, np.ndarray] = {}
    d_a4, grads["conv5"], grads["bias5"] = layers.conv3x3_backward(
        d_prob_logits, cache["c5"]
    )
    d_z4 = layers.relu_backward(d_a4, cache["m4"], inplace=True)
    d_cc, grads["conv4"], grads["bias4"] = layers.conv3x3_backward(d_z4, cache["c4"])
    d_up, d_skip = layers.concat_backward(d_cc, d_cc.shape[3] - cache["trunk"])
    d_a3 = layers.upsample_backward(d_up, cache["pool"])
    d_z3 = layers.relu_backward(d_a3, cache["m3"], inplace=True)
    d_p, grads["conv3"], grads["bias3"] = layers.conv3x3_backward(d_z3, cache["c3"])
    d_skip = d_skip + layers.maxpool_backward(d_p, cache["cp"])  # skip node fan-out
    d_z2 = layers.relu_backward(d_skip, cache["m2"], inplace=True)
    d_a1, grads["conv2"], grads["bias2"] = layers.conv3x3_backward(d_z2, cache["c2"])
    d_z1 = layers.relu_backward(d_a1, cache["m1"], inplace=True)
    _, grads["conv1"], grads["bias1"] = layers.conv3x3_backward(
        d_z1, cache["c1"], need_dx=False
    )
    return grads


def forward(
    image: np.ndarray, weights: SegNetWeights, keep_activations: bool = False
) -> ForwardResult:
    """Run the full network on one (h, w, c) image in [0, 1].

    The result carries the per-layer MAC ledger computed from the actual
    activation shapes, and the binary mask (probability strictly above 0.5).
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != weights.shape.in_channels:
        raise SegNetError(f"expected (h, w, {weights.shape.in_channels}) input")
    if not np.all(np.isfinite(img)):
        raise SegNetError("input contains non-finite values")
    f = weights.shape.pool_factor
    if img.shape[0] % f or img.shape[1] % f:
        raise SegNetError(f"spatial dims {img.shape[:2]} not divisible by {f}")

    prob, cache = batch_forward(img[None].astype(weights.kernels["conv1"].dtype),
                                weights, want_cache=keep_activations)
    prob2d = prob[0, :, :, 0]
    ledger = resource_ledger(weights.shape, img.shape[0], img.shape[1])
    activations = None
    if keep_activations:
        activations = _activation_shapes_from_cache(img, cache, weights)
    return ForwardResult(
        probabilities=prob2d,
        mask=prob2d > MASK_THRESHOLD,
        ledger=ledger,
        activations=activations,
    )


def _activation_shapes_from_cache(img, cache, weights):
    # re-run cheaply to expose named intermediate activations for tests
    k, b_ = weights.kernels, weights.biases
    f = weights.shape.pool_factor
    x = img[None].astype(weights.kernels["conv1"].dtype)
    z1, _ = layers.conv3x3_forward(x, k["conv1"], b_["conv1"])
    a1, _ = layers.relu_forward(z1)
    z2, _ = layers.conv3x3_forward(a1, k["conv2"], b_["conv2"])
    skip, _ = layers.relu_forward(z2)
    p, _ = layers.maxpool_forward(skip, f)
    z3, _ = layers.conv3x3_forward(p, k["conv3"], b_["conv3"])
    a3, _ = layers.relu_forward(z3)
    up = layers.upsample_forward(a3, f)
    cc = layers.concat_forward(up, skip)
    z4, _ = layers.conv3x3_forward(cc, k["conv4"], b_["conv4"])
    a4, _ = layers.relu_forward(z4)
    z5, _ = layers.conv3x3_forward(a4, k["conv5"], b_["conv5"])
    return {
        "input": x[0], "conv1": a1[0], "conv2": skip[0], "maxpool": p[0],
        "conv3": a3[0], "upsample": up[0], "concat": cc[0], "conv4": a4[0],
        "conv5": z5[0],
    }
