"""Concept-inference model: forward pass, zero-shot baseline, gradients.

The classifier mixes three branches over unit-norm image features v:

    scores   s   = ReLU(v W1^T) W2^T          two-layer concept branch
    branch   L_a = exp(-delta * (1 - s))      sharpened concept evidence
    branch   L_q = exp(-eta * (1 - v W3^T))   sharpened class evidence
    branch   L_e = v (f_t + beta Z)^T         residual-adapted text match
    logits       = alpha * L_a + lambda * L_q + L_e

Gradients for W1, W2, W3, Z are derived by hand (no autodiff); the
finite-difference suite in tests/ is the correctness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .concepts import ConceptBank
from .errors import HyperparamError, NonFiniteError, ShapeError
from .numerics import l2_normalize_rows, softmax_ce, softmax_rows
from .rng import SplitMix64, stream_seed

# Stream tag for the optional random W2 init, kept clear of the small
# per-class / per-epoch stream indices.
W2_INIT_STREAM = 0x5732


@dataclass
class Hyperparams:
    """Mixing, sharpness, and temperature knobs.

    ``lam`` is spelled out as ``lambda`` in JSON configs, CLI flags, and
    sweep names; ``top_i`` likewise maps to ``I``.
    """

    alpha: float = 1.5
    lam: float = 1.0
    delta: float = 4.5
    eta: float = 5.5
    beta: float = 0.8
    tau: float = 0.01
    top_i: int = 5

    def __post_init__(self):
        if self.delta <= 0 or self.eta <= 0:
            raise HyperparamError(
                f"sharpness must be > 0, got delta={self.delta}, eta={self.eta}"
            )
        if self.tau <= 0:
            raise HyperparamError(f"tau must be > 0, got {self.tau}")
        if self.top_i < 1:
            raise HyperparamError(f"top_i must be >= 1, got {self.top_i}")
        if self.alpha < 0 or self.lam < 0 or self.beta < 0:
            raise HyperparamError(
                f"mix weights must be >= 0, got alpha={self.alpha}, "
                f"lambda={self.lam}, beta={self.beta}"
            )

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["I"] = d.pop("top_i")
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if "I" in d:
            d["top_i"] = d.pop("I")
        return cls(**d)


def snap_to_f32(arr: np.ndarray) -> np.ndarray:
    """Round-trip through float32: the persistence precision.

    Parameters enter and leave training on the float32 grid so that a
    saved checkpoint reproduces in-memory evaluation exactly.
    """
    return np.ascontiguousarray(arr, dtype=np.float32).astype(np.float64)


@dataclass
class ModelParams:
    """Learnable tensors plus the frozen class-text features.

    ``f_t`` is stored unit-normalized (the similarity contract for all
    text/image matching) and is never touched by training. All arrays
    are float64 but live on the float32 grid (see ``snap_to_f32``).
    """

    w1: np.ndarray  # (K, D) concept templates, init from description concepts
    w2: np.ndarray  # (N, K) concept-score integrator
    w3: np.ndarray  # (N, D) class templates, init from class concepts
    z: np.ndarray  # (N, D) text-adapter residual, init zeros
    f_t: np.ndarray  # (N, D) frozen unit class-text features

    @property
    def num_classes(self) -> int:
        return int(self.f_t.shape[0])

    @property
    def num_concepts(self) -> int:
        return int(self.w1.shape[0])

    @property
    def dim(self) -> int:
        return int(self.f_t.shape[1])

    def copy(self) -> "ModelParams":
        return ModelParams(
            w1=self.w1.copy(),
            w2=self.w2.copy(),
            w3=self.w3.copy(),
            z=self.z.copy(),
            f_t=self.f_t.copy(),
        )


def init_w2(bank: ConceptBank, mode: str = "top1", seed: int = 0) -> np.ndarray:
    """Initial concept-to-class integrator weights.

    ``top1``: W2[n, k] = 1/count_n where concept k's top-1 support image
    came from class n and count_n is the number of such concepts for n.
    ``uniform``: entries uniform in [-0.01, 0.01] from a splitmix64
    stream of ``seed``.
    """
    n, k = bank.num_classes, bank.num_concepts
    if mode == "top1":
        w2 = np.zeros((n, k), dtype=np.float64)
        counts = np.bincount(bank.top1_image_class, minlength=n)
        for j in range(k):
            c = int(bank.top1_image_class[j])
            w2[c, j] = 1.0 / counts[c]
        return w2
    if mode == "uniform":
        rng = SplitMix64(stream_seed(seed, W2_INIT_STREAM))
        w2 = np.empty((n, k), dtype=np.float64)
        for i in range(n):
            for j in range(k):
                w2[i, j] = 0.02 * rng.next_float() - 0.01
        return w2
    raise ValueError(f"unknown w2 init mode {mode!r}")


def init_params(
    bank: ConceptBank,
    class_text_features: np.ndarray,
    w2_init: str = "top1",
    seed: int = 0,
) -> ModelParams:
    """Initialize all tensors: W1 from description concepts, W3 from class
    concepts, Z zeros, W2 per ``w2_init``."""
    f_t = l2_normalize_rows(np.asarray(class_text_features, dtype=np.float64))
    if f_t.shape != bank.class_concepts.shape:
        raise ShapeError(
            f"class text features {f_t.shape} vs class concepts "
            f"{bank.class_concepts.shape}"
        )
    return ModelParams(
        w1=snap_to_f32(bank.description_concepts),
        w2=snap_to_f32(init_w2(bank, w2_init, seed)),
        w3=snap_to_f32(bank.class_concepts),
        z=np.zeros_like(f_t),
        f_t=snap_to_f32(f_t),
    )


def affinity(x: np.ndarray, sharpness: float) -> np.ndarray:
    """exp(-sharpness * (1 - x)): positive, strictly increasing in x."""
    return np.exp(-sharpness * (1.0 - np.asarray(x, dtype=np.float64)))


def zero_shot_logits(
    v: np.ndarray, f_t: np.ndarray, tau: float
) -> np.ndarray:
    """Per-row softmax of image/class-text similarities at temperature tau."""
    if tau <= 0:
        raise HyperparamError(f"tau must be > 0, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    f_t = np.asarray(f_t, dtype=np.float64)
    if v.shape[1] != f_t.shape[1]:
        raise ShapeError(f"image dim {v.shape[1]} vs text dim {f_t.shape[1]}")
    return softmax_rows((v @ f_t.T) / tau)


@dataclass
class ForwardOutputs:
    h: np.ndarray  # (B, K) ReLU concept scores
    s: np.ndarray  # (B, N) integrated concept scores
    l_a: np.ndarray  # (B, N)
    l_q: np.ndarray  # (B, N)
    l_e: np.ndarray  # (B, N)
    logits: np.ndarray  # (B, N)


def forward(v: np.ndarray, params: ModelParams, hp: Hyperparams) -> ForwardOutputs:
    """Evaluate all three branches for a batch of unit-norm features."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != params.dim:
        raise ShapeError(f"features {v.shape} vs model dim {params.dim}")

    def check(name: str, arr: np.ndarray) -> np.ndarray:
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values at stage {name!r}")
        return arr

    h = check("h", np.maximum(v @ params.w1.T, 0.0))
    s = check("s", h @ params.w2.T)
    l_a = check("l_a", affinity(s, hp.delta))
    l_q = check("l_q", affinity(v @ params.w3.T, hp.eta))
    l_e = check("l_e", v @ (params.f_t + hp.beta * params.z).T)
    logits = check("logits", hp.alpha * l_a + hp.lam * l_q + l_e)
    return ForwardOutputs(h=h, s=s, l_a=l_a, l_q=l_q, l_e=l_e, logits=logits)


@dataclass
class ParamGrads:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    z: np.ndarray


def backward(
    v: np.ndarray,
    labels: np.ndarray,
    params: ModelParams,
    hp: Hyperparams,
    freeze_w3: bool = False,
) -> tuple[ParamGrads, float, ForwardOutputs]:
    """Cross-entropy loss and hand-derived gradients for one batch.

    With g = dLoss/dLogits, the chain rules are:

        G_a     = alpha * delta * (g * L_a)           (B, N)
        grad_W2 = G_a^T h
        grad_W1 = ((G_a W2) * [v W1^T > 0])^T v
        grad_W3 = eta * lambda * (g * L_q)^T v        (zero when frozen)
        grad_Z  = beta * g^T v
    """
    v = np.asarray(v, dtype=np.float64)
    out = forward(v, params, hp)
    loss, g = softmax_ce(out.logits, labels)

    g_a = (hp.alpha * hp.delta) * (g * out.l_a)  # (B, N)
    grad_w2 = g_a.T @ out.h  # (N, K)
    # h > 0 is exactly the ReLU pre-activation mask.
    u = (g_a @ params.w2) * (out.h > 0.0)  # (B, K)
    grad_w1 = u.T @ v  # (K, D)
    if freeze_w3:
        grad_w3 = np.zeros_like(params.w3)
    else:
        g_q = (hp.lam * hp.eta) * (g * out.l_q)  # (B, N)
        grad_w3 = g_q.T @ v  # (N, D)
    grad_z = hp.beta * (g.T @ v)  # (N, D)
    return ParamGrads(w1=grad_w1, w2=grad_w2, w3=grad_w3, z=grad_z), loss, out
