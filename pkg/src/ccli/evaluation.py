"""Accuracy measurement, domain-shift harness, sweeps, and reports.

Evaluation is chunked over test samples and may run chunks on a thread
pool; the CCLI_THREADS environment variable caps the pool size. Results
are assembled in sample order, so the report does not depend on the
thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .concepts import build_concept_bank
from .errors import ClassMapError, ShapeError
from .feature_store import FeatureBundle, sample_episode
from .model import (
    ForwardOutputs,
    Hyperparams,
    ModelParams,
    forward,
    snap_to_f32,
    zero_shot_logits,
)
from .numerics import l2_normalize_rows
from .trainer import TrainConfig, effective_hyperparams, train

DEFAULT_TAU = 0.01
_CHUNK = 4096

SWEEP_PARAMS = ("alpha", "delta", "beta", "eta", "lambda", "I", "shots")


def resolve_threads(threads: int | None = None) -> int:
    """Evaluation parallelism: explicit argument, else CCLI_THREADS, else 1."""
    if threads is None:
        threads = int(os.environ.get("CCLI_THREADS", "1"))
    return max(1, threads)


@dataclass
class EvalReport:
    """Per-bundle accuracy result plus enough context to reproduce it."""

    bundle_id: str
    num_samples: int
    overall_accuracy_pct: float
    per_class_accuracy_pct: list[float]
    class_names: list[str]
    config: dict = field(default_factory=dict)
    # Mean absolute per-class branch magnitudes {l_a, l_q, l_e}; None for
    # zero-shot reports.
    branch_contributions: dict[str, list[float]] | None = None

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")

    def to_text(self) -> str:
        lines = [
            f"bundle:   {self.bundle_id}",
            f"samples:  {self.num_samples}",
            f"accuracy: {self.overall_accuracy_pct:.2f}%",
            "per-class accuracy:",
        ]
        for name, acc in zip(self.class_names, self.per_class_accuracy_pct):
            lines.append(f"  {name:<32s} {acc:6.2f}%")
        return "\n".join(lines)


def _per_class_accuracy(
    preds: np.ndarray, labels: np.ndarray, num_classes: int
) -> list[float]:
    out = []
    for c in range(num_classes):
        mask = labels == c
        out.append(100.0 * float((preds[mask] == c).mean()) if mask.any() else 0.0)
    return out


def _chunked_forward(
    v: np.ndarray,
    params: ModelParams,
    hp: Hyperparams,
    threads: int | None,
) -> ForwardOutputs:
    """forward() over row chunks, optionally on a thread pool."""
    n_rows = v.shape[0]
    starts = list(range(0, n_rows, _CHUNK))
    if len(starts) <= 1:
        return forward(v, params, hp)
    pool_size = min(resolve_threads(threads), len(starts))

    def run(start: int) -> ForwardOutputs:
        return forward(v[start : start + _CHUNK], params, hp)

    if pool_size == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            parts = list(pool.map(run, starts))
    return ForwardOutputs(
        h=np.concatenate([p.h for p in parts]),
        s=np.concatenate([p.s for p in parts]),
        l_a=np.concatenate([p.l_a for p in parts]),
        l_q=np.concatenate([p.l_q for p in parts]),
        l_e=np.concatenate([p.l_e for p in parts]),
        logits=np.concatenate([p.logits for p in parts]),
    )


def evaluate(
    params: ModelParams,
    hp: Hyperparams,
    bundle: FeatureBundle,
    config_echo: dict | None = None,
    threads: int | None = None,
    class_map: np.ndarray | None = None,
) -> EvalReport:
    """Top-1 accuracy of the mixed logits over a whole bundle.

    ``class_map`` (target class -> source column) restricts the logits to
    the bundle's class subset; it is what the domain-shift harness uses.
    """
    if bundle.dim != params.dim:
        raise ShapeError(f"bundle dim {bundle.dim} vs model dim {params.dim}")
    if class_map is None:
        if bundle.num_classes != params.num_classes:
            raise ShapeError(
                f"bundle has {bundle.num_classes} classes, model "
                f"{params.num_classes}"
            )
        class_map = np.arange(params.num_classes, dtype=np.int64)

    v = bundle.normalized_image_features()
    labels = bundle.labels
    out = _chunked_forward(v, params, hp, threads)
    logits = out.logits[:, class_map]
    preds = np.argmax(logits, axis=1)  # ties -> lower class index

    num_classes = len(class_map)
    contributions = {
        "l_a": [0.0] * num_classes,
        "l_q": [0.0] * num_classes,
        "l_e": [0.0] * num_classes,
    }
    a = np.abs(hp.alpha * out.l_a[:, class_map]).mean(axis=1)
    q = np.abs(hp.lam * out.l_q[:, class_map]).mean(axis=1)
    e = np.abs(out.l_e[:, class_map]).mean(axis=1)
    for c in range(num_classes):
        mask = labels == c
        if mask.any():
            contributions["l_a"][c] = float(a[mask].mean())
            contributions["l_q"][c] = float(q[mask].mean())
            contributions["l_e"][c] = float(e[mask].mean())

    return EvalReport(
        bundle_id=bundle.identity(),
        num_samples=bundle.num_images,
        overall_accuracy_pct=100.0 * float((preds == labels).mean()),
        per_class_accuracy_pct=_per_class_accuracy(preds, labels, num_classes),
        class_names=bundle.class_names,
        config=dict(config_echo or {}, hyperparams=hp.to_json_dict()),
        branch_contributions=contributions,
    )


def evaluate_zero_shot(
    bundle: FeatureBundle, tau: float | None = None
) -> EvalReport:
    """Baseline: softmax over image/class-text similarities only.

    Class-text features pass through the same normalize-then-float32
    snap as model initialization, so argmax comparisons against the
    trained model's text branch are bit-for-bit meaningful.
    """
    if tau is None:
        tau = bundle.meta.tau if bundle.meta.tau else DEFAULT_TAU
    v = bundle.normalized_image_features()
    f_t = snap_to_f32(bundle.normalized_class_text_features())
    probs = zero_shot_logits(v, f_t, tau)
    preds = np.argmax(probs, axis=1)
    labels = bundle.labels
    return EvalReport(
        bundle_id=bundle.identity(),
        num_samples=bundle.num_images,
        overall_accuracy_pct=100.0 * float((preds == labels).mean()),
        per_class_accuracy_pct=_per_class_accuracy(
            preds, labels, bundle.num_classes
        ),
        class_names=bundle.class_names,
        config={"tau": tau, "mode": "zero_shot"},
        branch_contributions=None,
    )


@dataclass
class DomainShiftReport:
    source: EvalReport
    targets: list[EvalReport]
    ood_average_pct: float

    def to_json_dict(self) -> dict:
        return {
            "source": self.source.to_json_dict(),
            "targets": [t.to_json_dict() for t in self.targets],
            "ood_average_pct": self.ood_average_pct,
        }


def map_classes(source_names: list[str], target_names: list[str]) -> np.ndarray:
    """Target class index -> source class index, by exact name match."""
    index = {name: i for i, name in enumerate(source_names)}
    unmapped = [name for name in target_names if name not in index]
    if unmapped:
        raise ClassMapError(unmapped)
    return np.asarray([index[name] for name in target_names], dtype=np.int64)


def evaluate_domain_shift(
    params: ModelParams,
    hp: Hyperparams,
    source_report: EvalReport,
    targets: list[FeatureBundle],
    source_class_names: list[str],
    threads: int | None = None,
) -> DomainShiftReport:
    """Evaluate one trained model on distribution-shifted target bundles.

    Targets whose class list is a subset of the source evaluate over the
    mapped subset, with logits restricted to the present classes. The
    OOD average is the unweighted mean of target accuracies.
    """
    reports = []
    for target in targets:
        mapping = map_classes(source_class_names, target.class_names)
        reports.append(
            evaluate(
                params,
                hp,
                target,
                config_echo={"mode": "domain_shift"},
                threads=threads,
                class_map=mapping,
            )
        )
    ood = float(np.mean([r.overall_accuracy_pct for r in reports])) if reports else 0.0
    return DomainShiftReport(
        source=source_report, targets=reports, ood_average_pct=ood
    )


def concept_report(
    params: ModelParams,
    bundle: FeatureBundle,
    sample_index: int,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k concept texts for one image, ranked by its W1 scores."""
    if k > params.num_concepts:
        raise ValueError(f"k={k} exceeds {params.num_concepts} concepts")
    v = l2_normalize_rows(
        bundle.image_features[sample_index].astype(np.float64)[np.newaxis, :]
    )
    scores = (v @ params.w1.T).ravel()
    order = np.argsort(-scores, kind="stable")[:k]
    return [(bundle.concept_texts[int(i)], float(scores[i])) for i in order]


@dataclass
class SweepRow:
    param: str
    value: float
    accuracy_pct: float
    seed: int


def run_pipeline(
    train_bundle: FeatureBundle,
    test_bundle: FeatureBundle,
    cfg: TrainConfig,
    shots: int,
    seed: int,
    threads: int | None = None,
):
    """One deterministic episode -> concepts -> train -> evaluate pass."""
    episode = sample_episode(train_bundle, shots, seed)
    bank = build_concept_bank(train_bundle, episode, cfg.hyperparams.top_i)
    params, log = train(train_bundle, episode, bank, cfg)
    hp = effective_hyperparams(cfg)
    report = evaluate(
        params,
        hp,
        test_bundle,
        config_echo={"seed": seed, "shots": shots},
        threads=threads,
    )
    return params, log, report


def sweep(
    param: str,
    values: list[float],
    train_bundle: FeatureBundle,
    test_bundle: FeatureBundle,
    cfg: TrainConfig,
    shots: int,
    seed: int,
    threads: int | None = None,
) -> list[SweepRow]:
    """Full train+eval per grid value; returns one row per value."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}, got {param!r}")
    if not values:
        raise ValueError("sweep needs a non-empty value list")
    rows = []
    for value in values:
        cfg_v = dataclasses.replace(cfg)
        shots_v = shots
        if param == "shots":
            shots_v = int(value)
        elif param == "I":
            cfg_v = dataclasses.replace(
                cfg, hyperparams=dataclasses.replace(cfg.hyperparams, top_i=int(value))
            )
        else:
            field_name = "lam" if param == "lambda" else param
            cfg_v = dataclasses.replace(
                cfg,
                hyperparams=dataclasses.replace(
                    cfg.hyperparams, **{field_name: float(value)}
                ),
            )
        _, _, report = run_pipeline(
            train_bundle, test_bundle, cfg_v, shots_v, seed, threads
        )
        rows.append(
            SweepRow(
                param=param,
                value=float(value),
                accuracy_pct=report.overall_accuracy_pct,
                seed=seed,
            )
        )
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["param", "value", "accuracy_pct", "seed"])
        for row in rows:
            writer.writerow([row.param, row.value, row.accuracy_pct, row.seed])
