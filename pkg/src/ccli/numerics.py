"""Dense numeric kernels: normalization, similarity, loss, optimizer, schedule.

Matrices are plain float64 ndarrays (row-major); single precision appears
only at the persistence boundary. Matrix products and reductions are
delegated to numpy, which is deterministic run-to-run on a fixed build --
the determinism contract is enforced by the double-run tests rather than
by a hand-rolled accumulation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LabelError,
    NonFiniteGradError,
    ScheduleError,
    ShapeError,
    ZeroVectorError,
)

# Rows with norm below this are considered zero vectors.
ZERO_NORM_FLOOR = 1e-30


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Return a copy of ``m`` with every row scaled to unit Euclidean norm.

    Raises ZeroVectorError naming the first row whose norm is below
    ``ZERO_NORM_FLOOR``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[np.newaxis, :]
        return l2_normalize_rows(m)[0]
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    bad = np.flatnonzero(norms < ZERO_NORM_FLOOR)
    if bad.size:
        row = int(bad[0])
        raise ZeroVectorError(row, float(norms[row]))
    return m / norms[:, np.newaxis]


def cosine_sim(t: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    t = np.asarray(t, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if t.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {t.shape} vs {v.shape}")
    return float(min(1.0, max(-1.0, float(t @ v))))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    grad = (softmax(logits) - onehot(labels)) / batch_size
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    batch, num_classes = logits.shape
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for {batch} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelError(f"label {bad} outside [0, {num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(batch), labels]))
    grad = softmax_rows(logits)
    grad[np.arange(batch), labels] -= 1.0
    grad /= batch
    return loss, grad


@dataclass
class OptimizerState:
    """AdamW moments for one parameter tensor."""

    m: np.ndarray
    s: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_param(
        cls,
        param: np.ndarray,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ) -> "OptimizerState":
        return cls(
            m=np.zeros_like(param, dtype=np.float64),
            s=np.zeros_like(param, dtype=np.float64),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            weight_decay=weight_decay,
        )


def adamw_step(
    param: np.ndarray, grad: np.ndarray, state: OptimizerState, lr: float
) -> np.ndarray:
    """One AdamW update; returns the new parameter and mutates ``state``.

    Weight decay is decoupled: the parameter is shrunk by lr*wd before the
    bias-corrected Adam update is applied.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"param {param.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if not np.isfinite(grad).all():
        raise NonFiniteGradError("gradient contains NaN or Inf")
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.s = state.beta2 * state.s + (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1**t)
    s_hat = state.s / (1.0 - state.beta2**t)
    out = param * (1.0 - lr * state.weight_decay)
    out = out - lr * m_hat / (np.sqrt(s_hat) + state.eps)
    return out


@dataclass
class ScheduleConfig:
    """Cosine annealing from lr_max down to lr_min over total_steps."""

    lr_max: float
    total_steps: int
    lr_min: float = 0.0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ScheduleError(f"total_steps must be >= 1, got {self.total_steps}")
        if not (0.0 <= self.lr_min <= self.lr_max):
            raise ScheduleError(
                f"need 0 <= lr_min <= lr_max, got {self.lr_min}, {self.lr_max}"
            )


def cosine_lr(cfg: ScheduleConfig, step: int) -> float:
    """lr at ``step``: lr_min + (lr_max-lr_min) * (1 + cos(pi*step/total)) / 2."""
    if step < 0 or step > cfg.total_steps:
        raise ScheduleError(f"step {step} outside [0, {cfg.total_steps}]")
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (
        1.0 + math.cos(math.pi * step / cfg.total_steps)
    )
