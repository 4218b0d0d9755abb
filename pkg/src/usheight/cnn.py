"""Convolutional baseline sharing the capsule network's first two layers.

conv1 -> ReLU -> conv2 -> ReLU -> 2x2 max pool -> dense(64, ReLU) ->
dense(n_classes) -> softmax, trained with categorical cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .capsnet import INPUT_GAIN
from .echosim import HeightClass
from .errors import ShapeError, StateError
from .numerics import (
    AdamState,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    softmax_backward,
    softmax_forward,
)

CROSSENTROPY_CLAMP = 1e-12
NUM_CLASSES = 4


@dataclass
class CnnParams:
    conv1_kernels: np.ndarray
    conv1_bias: np.ndarray
    conv2_kernels: np.ndarray
    conv2_bias: np.ndarray
    dense1_weights: np.ndarray  # (pooled features, 64)
    dense1_bias: np.ndarray
    out_weights: np.ndarray     # (64, n_classes)
    out_bias: np.ndarray

    @classmethod
    def init(
        cls,
        in_channels: int = 2,
        seed: int = 0,
        grid: int = 14,
        conv1_kernel: int = 6,
        conv1_filters: int = 128,
        conv2_kernel: int = 4,
        conv2_filters: int = 256,
        hidden: int = 64,
        num_classes: int = NUM_CLASSES,
    ) -> "CnnParams":
        side = grid - conv1_kernel + 1 - conv2_kernel + 1
        if side < 2 or side % 2:
            raise ShapeError(f"post-conv side {side} not poolable by 2x2")
        n_flat = (side // 2) * (side // 2) * conv2_filters
        rng = np.random.default_rng(seed)

        def normal(shape, fan_in):
            return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

        return cls(
            conv1_kernels=normal(
                (conv1_kernel, conv1_kernel, in_channels, conv1_filters),
                conv1_kernel * conv1_kernel * in_channels,
            ),
            conv1_bias=np.zeros(conv1_filters),
            conv2_kernels=normal(
                (conv2_kernel, conv2_kernel, conv1_filters, conv2_filters),
                conv2_kernel * conv2_kernel * conv1_filters,
            ),
            conv2_bias=np.zeros(conv2_filters),
            dense1_weights=normal((n_flat, hidden), n_flat),
            dense1_bias=np.zeros(hidden),
            out_weights=normal((hidden, num_classes), hidden),
            out_bias=np.zeros(num_classes),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "conv1_kernels": self.conv1_kernels,
            "conv1_bias": self.conv1_bias,
            "conv2_kernels": self.conv2_kernels,
            "conv2_bias": self.conv2_bias,
            "dense1_weights": self.dense1_weights,
            "dense1_bias": self.dense1_bias,
            "out_weights": self.out_weights,
            "out_bias": self.out_bias,
        }

    @classmethod
    def from_dict(cls, d: dict[str, np.ndarray]) -> "CnnParams":
        return cls(**{k: d[k] for k in cls.init().as_dict()})

    @property
    def in_channels(self) -> int:
        return self.conv1_kernels.shape[2]


class CnnTape(NamedTuple):
    conv1_cache: object
    relu1_cache: np.ndarray
    conv2_cache: object
    relu2_cache: np.ndarray
    pool_cache: object
    pooled_shape: tuple
    dense1_cache: object
    relu3_cache: np.ndarray
    out_cache: object
    softmax_cache: np.ndarray
    squeeze: bool


def cnn_forward(params: CnnParams, x: np.ndarray) -> tuple[np.ndarray, CnnTape]:
    """Class probabilities, shape (n_classes,) or (batch, n_classes)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != params.in_channels:
        raise ShapeError(f"expected (batch, h, w, {params.in_channels}) input, got {x.shape}")
    x = x * INPUT_GAIN
    a1, c1 = conv2d_forward(x, params.conv1_kernels, params.conv1_bias)
    h1, r1 = relu_forward(a1)
    a2, c2 = conv2d_forward(h1, params.conv2_kernels, params.conv2_bias)
    h2, r2 = relu_forward(a2)
    pooled, pc = maxpool2x2_forward(h2)
    flat = pooled.reshape(pooled.shape[0], -1)
    if flat.shape[1] != params.dense1_weights.shape[0]:
        raise ShapeError(
            f"pooled features {flat.shape[1]} != dense input {params.dense1_weights.shape[0]}"
        )
    a3, d1 = dense_forward(flat, params.dense1_weights, params.dense1_bias)
    h3, r3 = relu_forward(a3)
    logits, d2 = dense_forward(h3, params.out_weights, params.out_bias)
    probs, sc = softmax_forward(logits)
    tape = CnnTape(c1, r1, c2, r2, pc, pooled.shape, d1, r3, d2, sc, squeeze)
    return (probs[0] if squeeze else probs), tape


def cnn_backward(params: CnnParams, tape: CnnTape, grad_probs: np.ndarray) -> dict[str, np.ndarray]:
    if tape is None:
        raise StateError("backward called before forward")
    if tape.squeeze:
        grad_probs = grad_probs[None]
    grad_logits = softmax_backward(tape.softmax_cache, grad_probs)
    grad_h3, grad_ow, grad_ob = dense_backward(tape.out_cache, grad_logits)
    grad_a3 = relu_backward(tape.relu3_cache, grad_h3)
    grad_flat, grad_dw, grad_db = dense_backward(tape.dense1_cache, grad_a3)
    grad_pooled = grad_flat.reshape(tape.pooled_shape)
    grad_h2 = maxpool2x2_backward(tape.pool_cache, grad_pooled)
    grad_a2 = relu_backward(tape.relu2_cache, grad_h2)
    grad_h1, grad_k2, grad_b2 = conv2d_backward(tape.conv2_cache, grad_a2)
    grad_a1 = relu_backward(tape.relu1_cache, grad_h1)
    _, grad_k1, grad_b1 = conv2d_backward(tape.conv1_cache, grad_a1)
    return {
        "conv1_kernels": grad_k1,
        "conv1_bias": grad_b1,
        "conv2_kernels": grad_k2,
        "conv2_bias": grad_b2,
        "dense1_weights": grad_dw,
        "dense1_bias": grad_db,
        "out_weights": grad_ow,
        "out_bias": grad_ob,
    }


def crossentropy(probs: np.ndarray, label: int) -> float:
    """-log p[label], clamped below at 1e-12 so the loss stays finite."""
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(float(probs[label]), CROSSENTROPY_CLAMP)))


def _crossentropy_batch(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    b_ = probs.shape[0]
    picked = probs[np.arange(b_), labels]
    clamped = np.maximum(picked, CROSSENTROPY_CLAMP)
    loss = float(-np.log(clamped).mean())
    grad = np.zeros_like(probs)
    # gradient is zero where the clamp is active, matching the forward exactly
    live = picked > CROSSENTROPY_CLAMP
    grad[np.arange(b_), labels] = np.where(live, -1.0 / clamped, 0.0) / b_
    return loss, grad


def cnn_predict(params: CnnParams, img: np.ndarray) -> HeightClass:
    probs, _ = cnn_forward(params, img)
    if probs.ndim == 2:
        probs = probs[0]
    return HeightClass(int(np.argmax(probs)))


def cnn_loss_and_grads(
    params: CnnParams, images: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    probs, tape = cnn_forward(params, images)
    loss, grad_probs = _crossentropy_batch(probs, labels)
    return loss, cnn_backward(params, tape, grad_probs)


def cnn_train_step(
    params: CnnParams, images: np.ndarray, labels: np.ndarray, opt: AdamState
) -> tuple[float, CnnParams, AdamState]:
    """One Adam update on the mean cross-entropy of a mini-batch."""
    if len(images) == 0:
        raise ValueError("empty batch")
    loss, grads = cnn_loss_and_grads(params, images, labels)
    new_tensors, opt = adam_step(params.as_dict(), grads, opt)
    return loss, CnnParams.from_dict(new_tensors), opt
