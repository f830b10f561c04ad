"""Layer primitives with explicit forward/backward passes.

All activations are (batch, height, width, channels) float arrays.  The
convolutions pick one of two equivalent lowerings depending on channel
counts: a patch-matrix form when the input is narrow (the 3-channel first
layer), and a single matrix product over the zero-padded input followed by
nine shifted crop-adds otherwise.  Backward builds the patch matrix of the
*output* gradient once and reuses it for both the kernel and the input
gradient.  Gradient accumulation order is fixed, so results are
reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

_OFFSETS = tuple((di, dj) for di in range(3) for dj in range(3))


def _im2col(x: np.ndarray) -> np.ndarray:
    """Patch matrix (b*h*w, 9*c) of the zero-padded input."""
    b, h, w, c = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 3, 3, c), dtype=x.dtype)
    for di, dj in _OFFSETS:
        cols[:, :, :, di, dj, :] = padded[:, di : di + h, dj : dj + w, :]
    return cols.reshape(b * h * w, 9 * c)


def conv3x3_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Same-padded stride-1 3x3 convolution; kernel is (3, 3, c_in, c_out)."""
    b, h, w, c_in = x.shape
    c_out = kernel.shape[3]
    if c_in <= 4:
        cols = _im2col(x)
        y = cols @ kernel.reshape(9 * c_in, c_out) + bias
        return y.reshape(b, h, w, c_out), ("cols", cols, kernel, x.shape)

    hp, wp = h + 2, w + 2
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    w_all = np.ascontiguousarray(kernel.transpose(2, 0, 1, 3)).reshape(c_in, 9 * c_out)
    y_all = (padded.reshape(b * hp * wp, c_in) @ w_all).reshape(b, hp, wp, 3, 3, c_out)
    y = np.empty((b, h, w, c_out), dtype=x.dtype)
    y[:] = bias
    for di, dj in _OFFSETS:
        y += y_all[:, di : di + h, dj : dj + w, di, dj, :]
    return y, ("fat", padded, kernel, x.shape)


def conv3x3_backward(dy: np.ndarray, cache, need_dx: bool = True):
    kind, stored, kernel, x_shape = cache
    b, h, w, c_in = x_shape
    c_out = kernel.shape[3]
    dy_flat = dy.reshape(b * h * w, c_out)
    d_bias = dy_flat.sum(axis=0)

    if kind == "cols":
        cols = stored
        d_kernel = (cols.T @ dy_flat).reshape(3, 3, c_in, c_out)
        if not need_dx:
            return None, d_kernel, d_bias
        d_cols = (dy_flat @ kernel.reshape(9 * c_in, c_out).T).reshape(
            b, h, w, 3, 3, c_in
        )
        d_padded = np.zeros((b, h + 2, w + 2, c_in), dtype=dy.dtype)
        for di, dj in _OFFSETS:
            d_padded[:, di : di + h, dj : dj + w, :] += d_cols[:, :, :, di, dj, :]
        return np.ascontiguousarray(d_padded[:, 1 : h + 1, 1 : w + 1, :]), d_kernel, d_bias

    padded = stored
    hp, wp = h + 2, w + 2
    # patch matrix of dy on the padded grid: entry ((a,b),(di,dj,o)) = dy[a-di, b-dj, o]
    dyq = np.zeros((b, h + 4, w + 4, c_out), dtype=dy.dtype)
    dyq[:, 2 : 2 + h, 2 : 2 + w, :] = dy
    cols_dy = np.empty((b, hp, wp, 3, 3, c_out), dtype=dy.dtype)
    for di, dj in _OFFSETS:
        cols_dy[:, :, :, di, dj, :] = dyq[:, 2 - di : 2 - di + hp, 2 - dj : 2 - dj + wp, :]
    cols_dy = cols_dy.reshape(b * hp * wp, 9 * c_out)

    x_flat = padded.reshape(b * hp * wp, c_in)
    d_kernel = (
        (x_flat.T @ cols_dy).reshape(c_in, 3, 3, c_out).transpose(1, 2, 0, 3)
    )
    d_kernel = np.ascontiguousarray(d_kernel)
    if not need_dx:
        return None, d_kernel, d_bias
    k_mat = np.ascontiguousarray(kernel.transpose(0, 1, 3, 2)).reshape(9 * c_out, c_in)
    d_padded = (cols_dy @ k_mat).reshape(b, hp, wp, c_in)
    return np.ascontiguousarray(d_padded[:, 1 : h + 1, 1 : w + 1, :]), d_kernel, d_bias


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dy: np.ndarray, mask: np.ndarray, inplace: bool = False) -> np.ndarray:
    if inplace:
        return np.multiply(dy, mask, out=dy)
    return dy * mask


def maxpool_forward(x: np.ndarray, factor: int):
    """Non-overlapping max pooling; caches the in-window argmax for routing."""
    b, h, w, c = x.shape
    ho, wo = h // factor, w // factor
    windows = (
        x.reshape(b, ho, factor, wo, factor, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, ho, wo, factor * factor, c)
    )
    idx = windows.argmax(axis=3)
    y = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, (idx, x.shape, factor)


def maxpool_backward(dy: np.ndarray, cache) -> np.ndarray:
    idx, x_shape, factor = cache
    b, h, w, c = x_shape
    ho, wo = h // factor, w // factor
    d_windows = np.zeros((b, ho, wo, factor * factor, c), dtype=dy.dtype)
    np.put_along_axis(d_windows, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    return (
        d_windows.reshape(b, ho, wo, factor, factor, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h, w, c)
    )


def upsample_forward(x: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor replication by ``factor`` in both spatial dimensions."""
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)


def upsample_backward(dy: np.ndarray, factor: int) -> np.ndarray:
    b, h, w, c = dy.shape
    return dy.reshape(b, h // factor, factor, w // factor, factor, c).sum(axis=(2, 4))


def concat_forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a, b], axis=3)


def concat_backward(dy: np.ndarray, split: int):
    return dy[:, :, :, :split], dy[:, :, :, split:]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
