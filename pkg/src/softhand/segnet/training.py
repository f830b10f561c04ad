"""Reference trainer: pixel-wise binary cross entropy with Adam.

Training is full precision and deterministic: sample order comes from a
seeded generator and gradient accumulation order is fixed, so a given
(dataset, config) pair always produces the same weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NetShape, SegNetWeights, SegNetError, batch_forward, batch_backward

PROB_CLAMP = 1e-7  # keeps log() finite inside the loss value


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: type = np.float32


@dataclass
class TrainResult:
    weights: SegNetWeights
    loss_curve: list[float] = field(repr=False, default_factory=list)


def bce_loss(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross entropy with probabilities clamped away from 0/1."""
    p = np.clip(probabilities, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(targets, dtype=p.dtype)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _validate_dataset(dataset, shape: NetShape):
    if len(dataset) == 0:
        raise SegNetError("dataset is empty")
    for i, (image, mask) in enumerate(dataset):
        img = np.asarray(image)
        m = np.asarray(mask)
        if img.ndim != 3 or img.shape[2] != shape.in_channels:
            raise SegNetError(f"sample {i}: bad image shape {img.shape}")
        if m.shape != img.shape[:2]:
            raise SegNetError(f"sample {i}: mask shape {m.shape} != image")
        values = np.unique(m)
        if not np.all(np.isin(values, (0, 1))):
            raise SegNetError(f"sample {i}: mask is not binary (values {values[:5]})")


class AdamOptimizer:
    """Standard Adam with bias correction, one slot pair per parameter."""

    def __init__(self, config: TrainConfig, params: dict[str, np.ndarray]):
        self.cfg = config
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for key in sorted(params):
            g = grads[key]
            self.m[key] = c.beta1 * self.m[key] + (1.0 - c.beta1) * g
            self.v[key] = c.beta2 * self.v[key] + (1.0 - c.beta2) * g * g
            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            params[key] -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)


def _params_of(weights: SegNetWeights) -> dict[str, np.ndarray]:
    out = {}
    for i, name in enumerate(("conv1", "conv2", "conv3", "conv4", "conv5"), start=1):
        out[name] = weights.kernels[name]
        out[f"bias{i}"] = weights.biases[name]
    return out


def forward_backward(
    batch_x: np.ndarray, batch_y: np.ndarray, weights: SegNetWeights
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and parameter gradients for one batch.

    The logit gradient uses the exact (p - y)/N form; the clamp only guards
    the reported loss value.
    """
    prob, cache = batch_forward(batch_x, weights, want_cache=True)
    y = batch_y[..., None].astype(prob.dtype)
    loss = bce_loss(prob, y)
    d_logits = (prob - y) / prob.size
    grads = batch_backward(d_logits.astype(prob.dtype), cache)
    return loss, grads


def train(
    dataset,
    config: TrainConfig | None = None,
    shape: NetShape | None = None,
    initial: SegNetWeights | None = None,
) -> TrainResult:
    """Train on (image, mask) pairs; returns weights and the per-epoch loss curve.

    Images are (h, w, c) floats in [0, 1]; masks are binary (h, w).
    """
    cfg = config or TrainConfig()
    net_shape = shape or NetShape()
    _validate_dataset(dataset, net_shape)

    weights = initial or SegNetWeights.initialize(net_shape, seed=cfg.seed, dtype=cfg.dtype)
    weights = weights.astype(cfg.dtype)
    params = _params_of(weights)
    optimizer = AdamOptimizer(cfg, params)
    rng = np.random.default_rng(cfg.seed)

    xs = np.stack([np.asarray(img, dtype=cfg.dtype) for img, _ in dataset])
    ys = np.stack([np.asarray(m, dtype=cfg.dtype) for _, m in dataset])

    loss_curve: list[float] = []
    n = len(dataset)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            loss, grads = forward_backward(xs[sel], ys[sel], weights)
            optimizer.step(params, grads)
            epoch_loss += loss * len(sel)
        loss_curve.append(epoch_loss / n)
    return TrainResult(weights=weights, loss_curve=loss_curve)
