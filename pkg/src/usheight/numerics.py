"""Array operations for the two networks: forwards, exact backwards, Adam.

Tensors are plain float64 numpy arrays, channels-last: images are
(batch, height, width, channels), conv kernels (k, k, c_in, c_out). Each
differentiable operation comes as a pair — `op_forward` returning
(output, cache) and `op_backward(cache, upstream)` returning input and
parameter gradients — so a network's backward pass replays its recorded
forward caches in reverse. Convenience single-call wrappers (`conv2d_valid`,
`relu`, ...) are provided for forward-only use.

All backwards are analytic and are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ShapeError, StateError


def _require_cache(cache) -> None:
    if cache is None:
        raise StateError("backward called before forward (no recorded cache)")


def _batched(x: np.ndarray, want_dims: int) -> tuple[np.ndarray, bool]:
    if x.ndim == want_dims - 1:
        return x[None], True
    if x.ndim != want_dims:
        raise ShapeError(f"expected {want_dims - 1}- or {want_dims}-dim input, got {x.ndim}-dim")
    return x, False


# --- convolution ---

class ConvCache(NamedTuple):
    x_shape: tuple
    cols: np.ndarray
    kernels: np.ndarray
    stride: int
    squeeze: bool


def conv2d_forward(
    x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, ConvCache]:
    """Valid (no padding) cross-correlation via im2col + one GEMM."""
    x, squeeze = _batched(x, 4)
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"kernels must be (k, k, c_in, c_out), got {kernels.shape}")
    b_, h, w, c = x.shape
    k, _, c_in, c_out = kernels.shape
    if c != c_in:
        raise ShapeError(f"input has {c} channels, kernels expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias must be ({c_out},), got {bias.shape}")
    if h < k or w < k:
        raise ShapeError(f"kernel {k}x{k} larger than input {h}x{w}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (b, ho, wo, c, k, k)
    ho, wo = windows.shape[1], windows.shape[2]
    cols = windows.reshape(b_ * ho * wo, c * k * k)
    kmat = kernels.transpose(2, 0, 1, 3).reshape(c * k * k, c_out)
    out = (cols @ kmat + bias).reshape(b_, ho, wo, c_out)
    cache = ConvCache(x.shape, cols, kernels, stride, squeeze)
    return (out[0] if squeeze else out), cache


def conv2d_valid(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    return conv2d_forward(x, kernels, bias, stride)[0]


def conv2d_backward(cache: ConvCache, grad_out: np.ndarray):
    _require_cache(cache)
    b_, h, w, c = cache.x_shape
    k, _, _, c_out = cache.kernels.shape
    stride = cache.stride
    if cache.squeeze:
        grad_out = grad_out[None]
    ho, wo = grad_out.shape[1], grad_out.shape[2]
    g2 = grad_out.reshape(b_ * ho * wo, c_out)

    dbias = g2.sum(axis=0)
    dkmat = cache.cols.T @ g2
    dkernels = dkmat.reshape(c, k, k, c_out).transpose(1, 2, 0, 3)

    dcols = (g2 @ cache.kernels.transpose(2, 0, 1, 3).reshape(c * k * k, c_out).T)
    dwin = dcols.reshape(b_, ho, wo, c, k, k)
    dx = np.zeros(cache.x_shape)
    for kh in range(k):
        for kw in range(k):
            dx[:, kh : kh + ho * stride : stride, kw : kw + wo * stride : stride, :] += dwin[
                :, :, :, :, kh, kw
            ]
    return (dx[0] if cache.squeeze else dx), dkernels, dbias


# --- elementwise / dense / softmax / pooling ---

def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(cache: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    _require_cache(cache)
    return grad_out * (cache > 0.0)


class DenseCache(NamedTuple):
    x: np.ndarray
    weights: np.ndarray
    squeeze: bool


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, DenseCache]:
    x, squeeze = _batched(x, 2)
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"input width {x.shape[1]} != weight rows {weights.shape[0]}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias must be ({weights.shape[1]},), got {bias.shape}")
    out = x @ weights + bias
    return (out[0] if squeeze else out), DenseCache(x, weights, squeeze)


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return dense_forward(x, weights, bias)[0]


def dense_backward(cache: DenseCache, grad_out: np.ndarray):
    _require_cache(cache)
    if cache.squeeze:
        grad_out = grad_out[None]
    dx = grad_out @ cache.weights.T
    dw = cache.x.T @ grad_out
    db = grad_out.sum(axis=0)
    return (dx[0] if cache.squeeze else dx), dw, db


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, numerically stabilized."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = softmax(x)
    return s, s


def softmax_backward(cache: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    _require_cache(cache)
    s = cache
    return s * (grad_out - (grad_out * s).sum(axis=-1, keepdims=True))


class PoolCache(NamedTuple):
    x_shape: tuple
    argmax: np.ndarray
    squeeze: bool


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, PoolCache]:
    x, squeeze = _batched(x, 4)
    b_, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    blocks = (
        x.reshape(b_, h // 2, 2, w // 2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b_, h // 2, w // 2, c, 4)
    )
    am = blocks.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(blocks, am[..., None], axis=-1)[..., 0]
    cache = PoolCache(x.shape, am, squeeze)
    return (out[0] if squeeze else out), cache


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    return maxpool2x2_forward(x)[0]


def maxpool2x2_backward(cache: PoolCache, grad_out: np.ndarray) -> np.ndarray:
    _require_cache(cache)
    b_, h, w, c = cache.x_shape
    if cache.squeeze:
        grad_out = grad_out[None]
    blocks = np.zeros((b_, h // 2, w // 2, c, 4))
    np.put_along_axis(blocks, cache.argmax[..., None], grad_out[..., None], axis=-1)
    dx = (
        blocks.reshape(b_, h // 2, w // 2, c, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b_, h, w, c)
    )
    return dx[0] if cache.squeeze else dx


# --- Adam ---

@dataclass
class AdamState:
    """Adam moments plus hyperparameters; shapes mirror the parameter dict."""

    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict[str, np.ndarray], lr: float = 1e-3, **kwargs) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            lr=lr,
            **kwargs,
        )


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if set(params) != set(grads):
        raise ShapeError(f"param/grad key mismatch: {sorted(set(params) ^ set(grads))}")
    t = state.step_count + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key!r} has shape {g.shape}, expected {p.shape}")
        m = state.beta1 * state.first_moment[key] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[key] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(
        first_moment=new_m,
        second_moment=new_v,
        step_count=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
