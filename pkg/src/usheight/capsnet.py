"""Capsule network for four-class height classification.

Forward path: two valid convolutions (ReLU) produce a 6x6x256 feature map
that is regrouped into 1,152 primary capsules of dimension 8 (32 capsule
types per grid cell). Each primary capsule is squashed, mapped through a
per-(input, class) 8x8 transformation matrix into a class prediction, and
the predictions are combined by iterative routing-by-agreement into four
digit capsules. The L2 norm of a digit capsule encodes class presence; the
loss is a per-class hinge-squared margin loss on those norms.

Routing gradients are computed by unrolling the fixed number of iterations
and replaying them in reverse; nothing here relies on an autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .echosim import HeightClass
from .errors import ShapeError, StateError
from .numerics import (
    AdamState,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_backward,
)

CAPS_DIM = 8
NUM_CLASSES = 4
DEFAULT_ROUTING_ITERATIONS = 3
# Echo amplitudes occupy a small slice of the 16-bit code range; this fixed
# gain places them in the squash nonlinearity's sensitive region. Shared with
# the CNN baseline (identical first two layers).
INPUT_GAIN = 60.0


@dataclass(frozen=True)
class MarginLossConfig:
    """Margin-loss constants: target norm above m_plus, others below m_minus."""

    m_plus: float = 0.9
    m_minus: float = 0.1
    lam: float = 0.5  # down-weight for absent classes

    def validate(self) -> None:
        if not (0.0 < self.m_minus < self.m_plus < 1.0):
            raise ValueError(f"need 0 < m_minus < m_plus < 1, got {self}")
        if self.lam <= 0.0:
            raise ValueError(f"lam must be positive, got {self.lam}")


@dataclass
class CapsNetParams:
    """All learnable tensors. transform[i, j] maps input capsule i to class j."""

    conv1_kernels: np.ndarray  # (k1, k1, c_in, f1)
    conv1_bias: np.ndarray
    conv2_kernels: np.ndarray  # (k2, k2, f1, f2), f2 divisible by 8
    conv2_bias: np.ndarray
    transform: np.ndarray      # (n_primary, n_classes, 8, 8)

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
        num_classes: int = NUM_CLASSES,
    ) -> "CapsNetParams":
        """Fan-in-scaled normal init; the defaults give the 14x14 architecture."""
        if conv2_filters % CAPS_DIM:
            raise ShapeError(f"conv2_filters must be divisible by {CAPS_DIM}")
        side = grid - conv1_kernel + 1 - conv2_kernel + 1
        if side < 1:
            raise ShapeError("kernels larger than the input grid")
        n_primary = side * side * (conv2_filters // CAPS_DIM)
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
            transform=normal((n_primary, num_classes, CAPS_DIM, CAPS_DIM), CAPS_DIM),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "conv1_kernels": self.conv1_kernels,
            "conv1_bias": self.conv1_bias,
            "conv2_kernels": self.conv2_kernels,
            "conv2_bias": self.conv2_bias,
            "transform": self.transform,
        }

    @classmethod
    def from_dict(cls, d: dict[str, np.ndarray]) -> "CapsNetParams":
        return cls(**{k: d[k] for k in cls.init().as_dict()})

    @property
    def in_channels(self) -> int:
        return self.conv1_kernels.shape[2]


# --- squash ---

def squash(s: np.ndarray) -> np.ndarray:
    """v = (|s|^2 / (1 + |s|^2)) * s/|s| over the last axis; |v| < 1, squash(0) = 0."""
    norm = np.linalg.norm(s, axis=-1, keepdims=True)
    return s * (norm / (1.0 + norm * norm))


def _squash_backward(s: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(s, axis=-1, keepdims=True)
    denom = 1.0 + norm * norm
    factor = norm / denom
    safe = np.where(norm > 0.0, norm, 1.0)
    radial = (grad_v * s).sum(axis=-1, keepdims=True)
    dfactor_dnorm = (1.0 - norm * norm) / (denom * denom)
    return grad_v * factor + s * (radial * dfactor_dnorm / safe)


# --- routing-by-agreement ---

@dataclass
class RoutingState:
    logits: np.ndarray     # final b, (n_primary, n_classes)
    couplings: np.ndarray  # softmax couplings of the last iteration
    iterations: int


class _RouteStep(NamedTuple):
    couplings: np.ndarray  # (b, i, j)
    s: np.ndarray          # (b, j, e) weighted prediction sums
    v: np.ndarray          # (b, j, e) squashed outputs


def _route_forward(u_hat: np.ndarray, iterations: int):
    """u_hat: (batch, n_in, n_out, dim). Returns (v, steps, final_logits)."""
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    b_, n_in, n_out, _ = u_hat.shape
    logits = np.zeros((b_, n_in, n_out))
    steps: list[_RouteStep] = []
    v = None
    for _ in range(iterations):
        couplings = softmax(logits)  # over output capsules
        s = np.einsum("bij,bije->bje", couplings, u_hat)
        v = squash(s)
        logits = logits + np.einsum("bije,bje->bij", u_hat, v)
        steps.append(_RouteStep(couplings, s, v))
    return v, steps, logits


def _route_backward(u_hat: np.ndarray, steps: list[_RouteStep], grad_v: np.ndarray) -> np.ndarray:
    """Replay the unrolled iterations in reverse; returns d(loss)/d(u_hat)."""
    grad_u_hat = np.zeros_like(u_hat)
    grad_logits = np.zeros_like(steps[0].couplings)  # final logits unused by the loss
    for t in range(len(steps) - 1, -1, -1):
        couplings, s, v = steps[t]
        gv = grad_v if t == len(steps) - 1 else np.zeros_like(grad_v)
        # agreement update b += u_hat . v feeds later iterations via grad_logits
        gv = gv + np.einsum("bij,bije->bje", grad_logits, u_hat)
        grad_u_hat += grad_logits[..., None] * v[:, None, :, :]
        gs = _squash_backward(s, gv)
        grad_c = np.einsum("bije,bje->bij", u_hat, gs)
        grad_u_hat += couplings[..., None] * gs[:, None, :, :]
        grad_logits = grad_logits + softmax_backward(couplings, grad_c)
    return grad_u_hat


def route(predictions: np.ndarray, iterations: int = DEFAULT_ROUTING_ITERATIONS):
    """Route (n_in, n_out, dim) predictions; returns (digit capsules, RoutingState)."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.ndim != 3:
        raise ShapeError(f"predictions must be (n_in, n_out, dim), got {predictions.shape}")
    v, steps, logits = _route_forward(predictions[None], iterations)
    return v[0], RoutingState(
        logits=logits[0], couplings=steps[-1].couplings[0], iterations=iterations
    )


# --- full network ---

class CapsTape(NamedTuple):
    """Recorded forward activations, consumed once by backward()."""

    conv1_cache: object
    relu1_cache: np.ndarray
    conv2_cache: object
    relu2_cache: np.ndarray
    feat_shape: tuple
    s_primary: np.ndarray
    u: np.ndarray
    u_hat: np.ndarray
    route_steps: list
    squeeze: bool


def forward(
    params: CapsNetParams,
    x: np.ndarray,
    routing_iterations: int = DEFAULT_ROUTING_ITERATIONS,
) -> tuple[np.ndarray, CapsTape]:
    """Digit capsules for a (batch, h, w, c) or (h, w, c) input."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != params.in_channels:
        raise ShapeError(
            f"expected (batch, h, w, {params.in_channels}) input, got {x.shape}"
        )
    x = x * INPUT_GAIN
    a1, c1 = conv2d_forward(x, params.conv1_kernels, params.conv1_bias)
    h1, r1 = relu_forward(a1)
    a2, c2 = conv2d_forward(h1, params.conv2_kernels, params.conv2_bias)
    h2, r2 = relu_forward(a2)

    b_, gh, gw, nf = h2.shape
    n_primary = gh * gw * (nf // CAPS_DIM)
    if n_primary != params.transform.shape[0]:
        raise ShapeError(
            f"feature map yields {n_primary} primary capsules, "
            f"transform expects {params.transform.shape[0]}"
        )
    s_primary = h2.reshape(b_, n_primary, CAPS_DIM)
    u = squash(s_primary)
    u_hat = np.einsum("bid,ijed->bije", u, params.transform)
    v, steps, _ = _route_forward(u_hat, routing_iterations)

    tape = CapsTape(c1, r1, c2, r2, h2.shape, s_primary, u, u_hat, steps, squeeze)
    return (v[0] if squeeze else v), tape


def backward(params: CapsNetParams, tape: CapsTape, grad_v: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d(loss)/d(digit capsules)."""
    if tape is None:
        raise StateError("backward called before forward")
    if tape.squeeze:
        grad_v = grad_v[None]
    grad_u_hat = _route_backward(tape.u_hat, tape.route_steps, grad_v)
    grad_transform = np.einsum("bije,bid->ijed", grad_u_hat, tape.u)
    grad_u = np.einsum("bije,ijed->bid", grad_u_hat, params.transform)
    grad_feat = _squash_backward(tape.s_primary, grad_u).reshape(tape.feat_shape)
    grad_a2 = relu_backward(tape.relu2_cache, grad_feat)
    grad_h1, grad_k2, grad_b2 = conv2d_backward(tape.conv2_cache, grad_a2)
    grad_a1 = relu_backward(tape.relu1_cache, grad_h1)
    _, grad_k1, grad_b1 = conv2d_backward(tape.conv1_cache, grad_a1)
    return {
        "conv1_kernels": grad_k1,
        "conv1_bias": grad_b1,
        "conv2_kernels": grad_k2,
        "conv2_bias": grad_b2,
        "transform": grad_transform,
    }


# --- loss and decisions ---

def margin_loss(v: np.ndarray, label: int, cfg: MarginLossConfig = MarginLossConfig()) -> float:
    """Sum over classes of hinge-squared terms on the digit-capsule norms."""
    cfg.validate()
    v = np.asarray(v)
    if not 0 <= label < v.shape[0]:
        raise ValueError(f"label {label} out of range for {v.shape[0]} classes")
    loss, _ = _margin_loss_batch(v[None], np.array([label]), cfg)
    return float(loss)


def _margin_loss_batch(
    v: np.ndarray, labels: np.ndarray, cfg: MarginLossConfig
) -> tuple[float, np.ndarray]:
    """Mean margin loss over a batch plus its gradient w.r.t. v."""
    b_, n_classes, _ = v.shape
    norms = np.linalg.norm(v, axis=-1)  # (b, j)
    t = np.zeros((b_, n_classes))
    t[np.arange(b_), labels] = 1.0
    present = np.maximum(0.0, cfg.m_plus - norms)
    absent = np.maximum(0.0, norms - cfg.m_minus)
    loss = (t * present**2 + cfg.lam * (1.0 - t) * absent**2).sum(axis=1).mean()

    dnorm = (-2.0 * t * present + 2.0 * cfg.lam * (1.0 - t) * absent) / b_
    safe = np.where(norms > 0.0, norms, 1.0)
    grad_v = (dnorm / safe)[..., None] * v
    return float(loss), grad_v


def predict(
    params: CapsNetParams,
    img: np.ndarray,
    routing_iterations: int = DEFAULT_ROUTING_ITERATIONS,
) -> HeightClass:
    """Class with the largest digit-capsule norm; ties go to the lowest index."""
    v, _ = forward(params, img, routing_iterations)
    if v.ndim == 3:
        v = v[0]
    norms = np.linalg.norm(v, axis=-1)
    return HeightClass(int(np.argmax(norms)))


def capsule_norms(
    params: CapsNetParams,
    x: np.ndarray,
    routing_iterations: int = DEFAULT_ROUTING_ITERATIONS,
) -> np.ndarray:
    """Digit-capsule norms, shape (n_classes,) or (batch, n_classes)."""
    v, _ = forward(params, x, routing_iterations)
    return np.linalg.norm(v, axis=-1)


def loss_and_grads(
    params: CapsNetParams,
    images: np.ndarray,
    labels: np.ndarray,
    routing_iterations: int = DEFAULT_ROUTING_ITERATIONS,
    loss_cfg: MarginLossConfig = MarginLossConfig(),
) -> tuple[float, dict[str, np.ndarray]]:
    v, tape = forward(params, images, routing_iterations)
    loss, grad_v = _margin_loss_batch(v, labels, loss_cfg)
    return loss, backward(params, tape, grad_v)


def train_step(
    params: CapsNetParams,
    images: np.ndarray,
    labels: np.ndarray,
    opt: AdamState,
    routing_iterations: int = DEFAULT_ROUTING_ITERATIONS,
    loss_cfg: MarginLossConfig = MarginLossConfig(),
) -> tuple[float, CapsNetParams, AdamState]:
    """One Adam update on the mean margin loss of a mini-batch."""
    if len(images) == 0:
        raise ValueError("empty batch")
    loss, grads = loss_and_grads(params, images, labels, routing_iterations, loss_cfg)
    new_tensors, opt = adam_step(params.as_dict(), grads, opt)
    return loss, CapsNetParams.from_dict(new_tensors), opt
