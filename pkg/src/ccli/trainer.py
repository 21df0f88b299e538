"""Few-shot training loop: batching, schedule, updates, checkpointing.

One AdamW state per learnable tensor, stepped in the fixed order
W1, W2, W3, Z every batch; a frozen W3 is skipped entirely (no update,
no weight decay). Each epoch reshuffles the support set with the
splitmix64 stream (seed, epoch). The run is fully determined by the
config, and the returned parameters sit on the float32 grid so that a
checkpoint round-trip reproduces evaluation exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .concepts import ConceptBank
from .errors import FormatError, NonFiniteError, NonFiniteGradError, ShapeError
from .feature_store import Episode, FeatureBundle, read_tensor, write_tensor
from .model import (
    Hyperparams,
    ModelParams,
    ParamGrads,
    backward,
    init_params,
    snap_to_f32,
)
from .numerics import (
    OptimizerState,
    ScheduleConfig,
    adamw_step,
    cosine_lr,
    l2_normalize_rows,
)
from .rng import SplitMix64, stream_seed

CHECKPOINT_VERSION = 1
CHECKPOINT_SIDECAR = "checkpoint.json"

_PARAM_TENSORS = ("w1", "w2", "w3", "z", "f_t")


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class TrainConfig:
    """Everything that determines a training run."""

    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    lr_min: float = 0.0
    seed: int = 0
    freeze_w3: bool = False
    # Ablation toggles. disable_ci turns off both concept branches;
    # the two finer toggles remove one concept family each.
    disable_ci: bool = False
    disable_ta: bool = False
    disable_description: bool = False
    disable_class: bool = False
    w2_init: str = "top1"
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hyperparams"] = self.hyperparams.to_json_dict()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hyperparams" in d:
            d["hyperparams"] = Hyperparams.from_json_dict(d["hyperparams"])
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        return cls(**d)


def effective_hyperparams(cfg: TrainConfig) -> Hyperparams:
    """Apply the ablation toggles: a disabled branch gets mix weight 0,
    which removes both its logits and its gradients."""
    hp = cfg.hyperparams
    alpha = 0.0 if (cfg.disable_ci or cfg.disable_description) else hp.alpha
    lam = 0.0 if (cfg.disable_ci or cfg.disable_class) else hp.lam
    beta = 0.0 if cfg.disable_ta else hp.beta
    return dataclasses.replace(hp, alpha=alpha, lam=lam, beta=beta)


@dataclass
class TrainLog:
    epoch_loss: list[float]
    epoch_train_acc: list[float]  # percent
    epoch_lr: list[float]
    final_step: int
    wall_time_s: float

    def jsonl_lines(self) -> list[str]:
        return [
            json.dumps(
                {
                    "epoch": i,
                    "loss": self.epoch_loss[i],
                    "train_acc": self.epoch_train_acc[i],
                    "lr": self.epoch_lr[i],
                }
            )
            for i in range(len(self.epoch_loss))
        ]

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for line in self.jsonl_lines():
                f.write(line + "\n")


def train(
    bundle: FeatureBundle,
    episode: Episode,
    bank: ConceptBank,
    cfg: TrainConfig,
) -> tuple[ModelParams, TrainLog]:
    """Run the full loop over the episode's support slice."""
    if bank.dim != bundle.dim:
        raise ShapeError(f"concept dim {bank.dim} vs bundle dim {bundle.dim}")
    if bank.num_classes != bundle.num_classes:
        raise ShapeError(
            f"concept classes {bank.num_classes} vs bundle {bundle.num_classes}"
        )
    flat = episode.flat_indices()
    support = l2_normalize_rows(bundle.image_features[flat].astype(np.float64))
    labels = bundle.labels[flat].astype(np.int64)
    num_support = support.shape[0]

    params = init_params(bank, bundle.class_text_features, cfg.w2_init, cfg.seed)
    hp = effective_hyperparams(cfg)

    opt = cfg.optimizer
    states = {
        name: OptimizerState.for_param(
            getattr(params, name),
            beta1=opt.beta1,
            beta2=opt.beta2,
            eps=opt.eps,
            weight_decay=opt.weight_decay,
        )
        for name in ("w1", "w2", "w3", "z")
    }

    steps_per_epoch = max(1, math.ceil(num_support / cfg.batch_size))
    schedule = ScheduleConfig(
        lr_max=cfg.lr, total_steps=cfg.epochs * steps_per_epoch, lr_min=cfg.lr_min
    )

    t0 = time.perf_counter()
    epoch_loss, epoch_acc, epoch_lr = [], [], []
    step = 0
    for epoch in range(cfg.epochs):
        order = list(range(num_support))
        SplitMix64(stream_seed(cfg.seed, epoch)).shuffle(order)
        loss_sum = 0.0
        correct = 0
        first_lr = cosine_lr(schedule, step)
        for start in range(0, num_support, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            lr = cosine_lr(schedule, step)
            try:
                grads, loss, outs = backward(
                    support[batch], labels[batch], params, hp, cfg.freeze_w3
                )
                params.w1 = adamw_step(params.w1, grads.w1, states["w1"], lr)
                params.w2 = adamw_step(params.w2, grads.w2, states["w2"], lr)
                if not cfg.freeze_w3:
                    params.w3 = adamw_step(params.w3, grads.w3, states["w3"], lr)
                params.z = adamw_step(params.z, grads.z, states["z"], lr)
            except (NonFiniteError, NonFiniteGradError) as e:
                raise type(e)(f"epoch {epoch}, step {step}: {e}") from e
            step += 1
            loss_sum += loss * len(batch)
            preds = np.argmax(outs.logits, axis=1)
            correct += int((preds == labels[batch]).sum())
        epoch_loss.append(loss_sum / num_support)
        epoch_acc.append(100.0 * correct / num_support)
        epoch_lr.append(first_lr)

    # Land the result on the persistence grid.
    params.w1 = snap_to_f32(params.w1)
    params.w2 = snap_to_f32(params.w2)
    params.w3 = snap_to_f32(params.w3)
    params.z = snap_to_f32(params.z)

    log = TrainLog(
        epoch_loss=epoch_loss,
        epoch_train_acc=epoch_acc,
        epoch_lr=epoch_lr,
        final_step=step,
        wall_time_s=time.perf_counter() - t0,
    )
    return params, log


def save_checkpoint(
    path: str,
    params: ModelParams,
    hp: Hyperparams,
    init_provenance: dict | None = None,
    train_config: dict | None = None,
) -> None:
    """Persist parameters (float32 tensors) plus a JSON sidecar."""
    os.makedirs(path, exist_ok=True)
    table = {}
    for name in _PARAM_TENSORS:
        arr = getattr(params, name)
        fname = f"{name}.f32"
        write_tensor(os.path.join(path, fname), arr)
        table[name] = {"path": fname, "shape": list(arr.shape)}
    sidecar = {
        "version": CHECKPOINT_VERSION,
        "dim": params.dim,
        "num_classes": params.num_classes,
        "num_concepts": params.num_concepts,
        "hyperparams": hp.to_json_dict(),
        "tensors": table,
        "init": init_provenance or {},
        "train_config": train_config or {},
    }
    with open(os.path.join(path, CHECKPOINT_SIDECAR), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, ensure_ascii=False)
        f.write("\n")


def load_checkpoint(path: str) -> tuple[ModelParams, Hyperparams, dict]:
    """Restore (params, hyperparams, sidecar). Bit-exact at float32."""
    sidecar_path = os.path.join(path, CHECKPOINT_SIDECAR)
    if not os.path.isfile(sidecar_path):
        raise FormatError(f"{path}: no {CHECKPOINT_SIDECAR} found")
    with open(sidecar_path, encoding="utf-8") as f:
        sidecar = json.load(f)
    if sidecar.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: checkpoint version {sidecar.get('version')!r}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    dim = int(sidecar["dim"])
    n = int(sidecar["num_classes"])
    k = int(sidecar["num_concepts"])
    expected = {
        "w1": (k, dim),
        "w2": (n, k),
        "w3": (n, dim),
        "z": (n, dim),
        "f_t": (n, dim),
    }
    table = sidecar["tensors"]
    loaded = {}
    for name in _PARAM_TENSORS:
        declared = tuple(table[name]["shape"])
        if declared != expected[name]:
            raise ShapeError(
                f"{name}: declared shape {declared} != expected {expected[name]}"
            )
        loaded[name] = read_tensor(
            os.path.join(path, table[name]["path"]), declared
        ).astype(np.float64)
    params = ModelParams(**loaded)
    hp = Hyperparams.from_json_dict(sidecar["hyperparams"])
    return params, hp, sidecar
