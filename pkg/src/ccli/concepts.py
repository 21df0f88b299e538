"""Cross-modal concept mining from a few-shot support set.

Two concept families are built from the support images:

* description concepts -- for every concept text, the similarity-weighted
  average of the top-I most similar support image features;
* class concepts -- the per-class mean of the support features.

Averaged rows are re-normalized to unit length so that downstream
affinity scores stay on a cosine-like scale with maximum 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatError,
    InsufficientShotsError,
    InsufficientSupportError,
)
from .feature_store import FeatureBundle, Episode, read_tensor, write_tensor
from .numerics import l2_normalize_rows

BANK_VERSION = 1
BANK_MANIFEST = "manifest.json"

# Below this, a top-I weight sum is treated as degenerate and the
# unweighted mean is used instead.
WEIGHT_SUM_FLOOR = 1e-12


def top_i_select(sims: np.ndarray, top_i: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights of the ``top_i`` highest similarities.

    Weights are the similarity scores themselves. Ties break toward the
    lower image index.
    """
    sims = np.asarray(sims, dtype=np.float64).ravel()
    if top_i < 1:
        raise ValueError(f"top_i must be >= 1, got {top_i}")
    if top_i > sims.size:
        raise InsufficientSupportError(
            f"top_i={top_i} exceeds support size {sims.size}"
        )
    # Stable argsort of the negated scores: descending value, ascending
    # index on ties.
    order = np.argsort(-sims, kind="stable")[:top_i]
    return order.astype(np.int64), sims[order]


def learn_description_concepts(
    support: np.ndarray, concept_texts: np.ndarray, top_i: int
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Mine one visual concept per concept-text row.

    ``support`` (S, D) and ``concept_texts`` (K, D) must be unit rows.
    Returns (concepts (K, D) unit rows, top1_class_source (K,) index of
    each concept's single most similar support image, fallback_rows).
    A row falls back to the unweighted mean of its top-I features when
    the weight sum is degenerate (<= 1e-12).
    """
    support = np.asarray(support, dtype=np.float64)
    concept_texts = np.asarray(concept_texts, dtype=np.float64)
    num_concepts = concept_texts.shape[0]
    sims = concept_texts @ support.T  # (K, S)
    out = np.empty((num_concepts, support.shape[1]), dtype=np.float64)
    top1 = np.empty(num_concepts, dtype=np.int64)
    fallback_rows: list[int] = []
    for k in range(num_concepts):
        idx, weights = top_i_select(sims[k], top_i)
        top1[k] = idx[0]
        wsum = float(weights.sum())
        if wsum <= WEIGHT_SUM_FLOOR:
            fallback_rows.append(k)
            out[k] = support[idx].mean(axis=0)
        else:
            out[k] = (weights[:, np.newaxis] * support[idx]).sum(axis=0) / wsum
    return l2_normalize_rows(out), top1, fallback_rows


def learn_class_concepts(support_by_class: np.ndarray) -> np.ndarray:
    """Unit-normalized per-class mean of an (N, M, D) support block."""
    support_by_class = np.asarray(support_by_class, dtype=np.float64)
    if support_by_class.ndim != 3:
        raise ValueError(
            f"expected (classes, shots, dim), got {support_by_class.shape}"
        )
    if support_by_class.shape[1] == 0:
        raise InsufficientShotsError("class concepts need at least one shot")
    return l2_normalize_rows(support_by_class.mean(axis=1))


@dataclass
class ConceptBank:
    """Mined concepts plus enough provenance to rebuild or audit them."""

    description_concepts: np.ndarray  # (K, D) unit rows, float64
    class_concepts: np.ndarray  # (N, D) unit rows, float64
    top1_image_class: np.ndarray  # (K,) class of each concept's top-1 image
    provenance: dict = field(default_factory=dict)

    @property
    def num_concepts(self) -> int:
        return int(self.description_concepts.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.class_concepts.shape[0])

    @property
    def dim(self) -> int:
        return int(self.description_concepts.shape[1])


def build_concept_bank(
    bundle: FeatureBundle, episode: Episode, top_i: int
) -> ConceptBank:
    """Mine both concept families from the episode's support slice."""
    feats = bundle.normalized_image_features()
    texts = bundle.normalized_concept_text_features()
    flat = episode.flat_indices()
    support = feats[flat]  # (N*M, D), class-major order
    v_cp, top1, fallback_rows = learn_description_concepts(support, texts, top_i)
    by_class = feats[episode.indices.reshape(-1)].reshape(
        bundle.num_classes, episode.shots, bundle.dim
    )
    v_mu = learn_class_concepts(by_class)
    # Support rows are laid out class-major, so row // shots is the class.
    top1_class = (top1 // episode.shots).astype(np.int64)
    return ConceptBank(
        description_concepts=v_cp,
        class_concepts=v_mu,
        top1_image_class=top1_class,
        provenance={
            "source": bundle.identity(),
            "episode_seed": episode.seed,
            "shots": episode.shots,
            "top_i": top_i,
            "fallback_rows": fallback_rows,
        },
    )


def save_concept_bank(bank: ConceptBank, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    write_tensor(os.path.join(path, "v_cp.f32"), bank.description_concepts)
    write_tensor(os.path.join(path, "v_mu.f32"), bank.class_concepts)
    manifest = {
        "version": BANK_VERSION,
        "tensors": {
            "v_cp": {"path": "v_cp.f32", "shape": list(bank.description_concepts.shape)},
            "v_mu": {"path": "v_mu.f32", "shape": list(bank.class_concepts.shape)},
        },
        "top1_image_class": [int(c) for c in bank.top1_image_class],
        "provenance": bank.provenance,
    }
    with open(os.path.join(path, BANK_MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
        f.write("\n")


def load_concept_bank(path: str) -> ConceptBank:
    manifest_path = os.path.join(path, BANK_MANIFEST)
    if not os.path.isfile(manifest_path):
        raise FormatError(f"{path}: no {BANK_MANIFEST} found")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("version") != BANK_VERSION:
        raise FormatError(
            f"{path}: concept bank version {manifest.get('version')!r}, "
            f"expected {BANK_VERSION}"
        )
    table = manifest["tensors"]
    v_cp = read_tensor(
        os.path.join(path, table["v_cp"]["path"]), tuple(table["v_cp"]["shape"])
    ).astype(np.float64)
    v_mu = read_tensor(
        os.path.join(path, table["v_mu"]["path"]), tuple(table["v_mu"]["shape"])
    ).astype(np.float64)
    return ConceptBank(
        description_concepts=v_cp,
        class_concepts=v_mu,
        top1_image_class=np.asarray(manifest["top1_image_class"], dtype=np.int64),
        provenance=dict(manifest.get("provenance", {})),
    )
