"""Embedding-bundle persistence, episode sampling, and synthetic bundles.

A bundle on disk is a directory:

    manifest.json            counts, names, meta, tensor table
    image_features.f32       raw little-endian float32, row-major
    labels.f32               class indices stored as float32
    class_text_features.f32
    concept_text_features.f32

The manifest is validated (shapes vs. file sizes) before any tensor is
read, so a truncated or mislabeled payload fails fast. Round-trips are
bit-exact on the float32 payload and byte-exact on strings.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CorruptBundleError, FormatError, InsufficientShotsError
from .numerics import l2_normalize_rows
from .rng import SplitMix64, stream_seed

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

# Fixed tensor table of a feature bundle.
_BUNDLE_TENSORS = (
    "image_features",
    "labels",
    "class_text_features",
    "concept_text_features",
)


def write_tensor(path: str, arr: np.ndarray) -> None:
    """Write ``arr`` as raw little-endian float32, row-major, no header."""
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)


def read_tensor(path: str, shape: tuple[int, ...]) -> np.ndarray:
    """Read a raw float32 tensor, verifying the byte count first."""
    expected = int(np.prod(shape)) * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise CorruptBundleError(
            f"{path}: expected {expected} bytes for shape {tuple(shape)}, "
            f"found {actual}"
        )
    return np.fromfile(path, dtype="<f4").reshape(shape)


@dataclass
class BundleMeta:
    """Provenance recorded alongside the tensors.

    ``tau`` is optional: extractors that know the encoder's learned
    softmax temperature record it here, and it then overrides the
    engine's default at zero-shot evaluation time.
    """

    prompt_class: str = ""
    prompt_concept: str = ""
    encoder: str = ""
    dataset: str = ""
    split: str = ""
    normalized: bool = False
    tau: float | None = None


@dataclass
class FeatureBundle:
    """Pre-extracted embeddings for one dataset split.

    Feature matrices are float32 (the persistence precision) and are kept
    exactly as extracted; consumers normalize explicitly via the
    ``normalized_*`` helpers, which also promote to float64.
    """

    dim: int
    image_features: np.ndarray  # (num_images, dim) float32
    labels: np.ndarray  # (num_images,) int64
    class_names: list[str]
    class_text_features: np.ndarray  # (num_classes, dim) float32
    concept_texts: list[str]
    concept_text_features: np.ndarray  # (num_concepts, dim) float32
    meta: BundleMeta = field(default_factory=BundleMeta)

    @property
    def num_images(self) -> int:
        return int(self.image_features.shape[0])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_concepts(self) -> int:
        return len(self.concept_texts)

    def identity(self) -> str:
        m = self.meta
        return f"{m.dataset}/{m.split}@{m.encoder}"

    def normalized_image_features(self) -> np.ndarray:
        return l2_normalize_rows(self.image_features.astype(np.float64))

    def normalized_class_text_features(self) -> np.ndarray:
        return l2_normalize_rows(self.class_text_features.astype(np.float64))

    def normalized_concept_text_features(self) -> np.ndarray:
        return l2_normalize_rows(self.concept_text_features.astype(np.float64))

    def validate(self) -> None:
        n, k = self.num_classes, self.num_concepts
        if self.class_text_features.shape != (n, self.dim):
            raise CorruptBundleError(
                f"class_text_features {self.class_text_features.shape} != ({n}, {self.dim})"
            )
        if self.concept_text_features.shape != (k, self.dim):
            raise CorruptBundleError(
                f"concept_text_features {self.concept_text_features.shape} != ({k}, {self.dim})"
            )
        if self.image_features.ndim != 2 or self.image_features.shape[1] != self.dim:
            raise CorruptBundleError(
                f"image_features {self.image_features.shape} has dim != {self.dim}"
            )
        if self.labels.shape != (self.num_images,):
            raise CorruptBundleError(
                f"{self.labels.shape[0]} labels for {self.num_images} images"
            )
        if self.num_images and (self.labels.min() < 0 or self.labels.max() >= n):
            raise CorruptBundleError(f"labels outside [0, {n})")


def write_bundle(bundle: FeatureBundle, path: str) -> None:
    """Persist ``bundle`` under directory ``path`` (created if needed)."""
    bundle.validate()
    os.makedirs(path, exist_ok=True)
    tensors = {
        "image_features": bundle.image_features.astype("<f4"),
        "labels": bundle.labels.astype("<f4"),
        "class_text_features": bundle.class_text_features.astype("<f4"),
        "concept_text_features": bundle.concept_text_features.astype("<f4"),
    }
    table = {}
    for name, arr in tensors.items():
        fname = f"{name}.f32"
        write_tensor(os.path.join(path, fname), arr)
        table[name] = {"path": fname, "shape": list(arr.shape)}
    manifest = {
        "version": MANIFEST_VERSION,
        "dim": bundle.dim,
        "num_images": bundle.num_images,
        "num_classes": bundle.num_classes,
        "num_concepts": bundle.num_concepts,
        "class_names": bundle.class_names,
        "concept_texts": bundle.concept_texts,
        "tensors": table,
        "meta": asdict(bundle.meta),
    }
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
        f.write("\n")


def read_bundle(path: str) -> FeatureBundle:
    """Load a bundle directory, validating the manifest before the payload."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise FormatError(f"{path}: no {MANIFEST_NAME} found")
    with open(manifest_path, encoding="utf-8") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{manifest_path}: invalid JSON ({e})") from e
    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise FormatError(
            f"{path}: manifest version {version!r}, expected {MANIFEST_VERSION}"
        )

    dim = int(manifest["dim"])
    num_images = int(manifest["num_images"])
    num_classes = int(manifest["num_classes"])
    num_concepts = int(manifest["num_concepts"])
    class_names = list(manifest["class_names"])
    concept_texts = list(manifest["concept_texts"])
    if len(class_names) != num_classes:
        raise CorruptBundleError(
            f"{len(class_names)} class names, manifest says {num_classes}"
        )
    if len(concept_texts) != num_concepts:
        raise CorruptBundleError(
            f"{len(concept_texts)} concept texts, manifest says {num_concepts}"
        )

    table = manifest["tensors"]
    expected_shapes = {
        "image_features": (num_images, dim),
        "labels": (num_images,),
        "class_text_features": (num_classes, dim),
        "concept_text_features": (num_concepts, dim),
    }
    # Validate the whole table (declared shapes and on-disk sizes) before
    # loading any tensor.
    for name in _BUNDLE_TENSORS:
        if name not in table:
            raise CorruptBundleError(f"manifest missing tensor entry {name!r}")
        declared = tuple(table[name]["shape"])
        if declared != expected_shapes[name]:
            raise CorruptBundleError(
                f"{name}: declared shape {declared} != expected {expected_shapes[name]}"
            )
        fpath = os.path.join(path, table[name]["path"])
        if not os.path.isfile(fpath):
            raise CorruptBundleError(f"{name}: tensor file {fpath} missing")
        expected_bytes = int(np.prod(declared)) * 4
        if os.path.getsize(fpath) != expected_bytes:
            raise CorruptBundleError(
                f"{name}: file {fpath} has {os.path.getsize(fpath)} bytes, "
                f"expected {expected_bytes}"
            )

    loaded = {
        name: read_tensor(
            os.path.join(path, table[name]["path"]), expected_shapes[name]
        )
        for name in _BUNDLE_TENSORS
    }
    meta_fields = {f.name for f in BundleMeta.__dataclass_fields__.values()}
    meta = BundleMeta(
        **{k: v for k, v in manifest.get("meta", {}).items() if k in meta_fields}
    )
    bundle = FeatureBundle(
        dim=dim,
        image_features=loaded["image_features"],
        labels=loaded["labels"].astype(np.int64),
        class_names=class_names,
        class_text_features=loaded["class_text_features"],
        concept_texts=concept_texts,
        concept_text_features=loaded["concept_text_features"],
        meta=meta,
    )
    bundle.validate()
    return bundle


@dataclass
class Episode:
    """A deterministic M-shot support selection over a bundle."""

    shots: int
    indices: np.ndarray  # (num_classes, shots) int64
    seed: int

    def flat_indices(self) -> np.ndarray:
        return self.indices.reshape(-1)


def sample_episode(bundle: FeatureBundle, shots: int, seed: int) -> Episode:
    """Pick ``shots`` images per class, deterministically in ``seed``.

    Each class uses its own splitmix64 stream (``stream_seed(seed, c)``)
    to Fisher-Yates-shuffle the class's ascending index list; the episode
    takes the first ``shots`` entries. Because the full list is shuffled
    regardless of ``shots``, a smaller-shot episode is always a prefix of
    a larger one at the same seed.
    """
    labels = bundle.labels
    rows = []
    for c, name in enumerate(bundle.class_names):
        class_idx = np.flatnonzero(labels == c)
        if class_idx.size < shots:
            raise InsufficientShotsError(
                f"class {name!r} has {class_idx.size} images, need {shots}"
            )
        order = [int(i) for i in class_idx]
        SplitMix64(stream_seed(seed, c)).shuffle(order)
        rows.append(order[:shots])
    indices = np.asarray(rows, dtype=np.int64).reshape(bundle.num_classes, shots)
    return Episode(shots=shots, indices=indices, seed=seed)


@dataclass
class SynthSpec:
    """Recipe for a self-contained synthetic bundle pair."""

    num_classes: int
    dim: int
    num_concepts: int
    train_per_class: int
    test_per_class: int
    sigma: float
    seed: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.num_concepts < self.num_classes:
            raise ValueError("num_concepts must be >= num_classes")


def _normal_matrix(rng: SplitMix64, rows: int, cols: int) -> np.ndarray:
    out = np.empty((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            out[i, j] = rng.next_normal()
    return out


# Geometry constants of the synthetic generator. The cluster spread
# sigma is realized as a Gaussian perturbation of expected norm
# NOISE_NORM_FACTOR * sigma (per-coordinate std scales with 1/sqrt(dim)
# so difficulty is dimension-independent). Images additionally carry one
# of a small pool of shared attribute directions, preferred per class,
# at the same norm -- the sub-cluster structure a concept learner can
# exploit. The class-text feature is an imperfect proxy of the image
# cluster (the text anchor sits one perturbation away from the image
# centroid), which is what a few-shot adapter can beat.
NOISE_NORM_FACTOR = 3.5
SYNTH_NUM_ATTRS = 8
SYNTH_ATTRS_PER_CLASS = 2


def gen_synth(spec: SynthSpec) -> tuple[FeatureBundle, FeatureBundle]:
    """Build a (train, test) bundle pair fully determined by ``spec``.

    Construction, all scales proportional to sigma (so at sigma -> 0
    images, class texts, and class vectors coincide exactly):

    * class-text features: num_classes random unit vectors;
    * image centroids: unit-normalized perturbations of the class texts;
    * attribute pool: shared unit directions, two preferred per class;
    * image = normalize(centroid + attr_norm * attribute + noise);
    * concept texts: random unit vectors, first num_classes rows copied
      from the class vectors and the next rows from the attribute pool,
      guaranteeing minable concepts.

    Train and test draws are disjoint; everything is a pure function of
    the spec.
    """
    rng = SplitMix64(spec.seed)
    n, d, k = spec.num_classes, spec.dim, spec.num_concepts
    coord_std = NOISE_NORM_FACTOR * spec.sigma / math.sqrt(d)
    attr_norm = NOISE_NORM_FACTOR * spec.sigma
    num_attrs = min(SYNTH_NUM_ATTRS, k - n)
    attrs_per_class = min(SYNTH_ATTRS_PER_CLASS, num_attrs)

    class_text = l2_normalize_rows(_normal_matrix(rng, n, d))
    centroids = l2_normalize_rows(
        class_text + coord_std * _normal_matrix(rng, n, d)
    )
    attr_pool = (
        l2_normalize_rows(_normal_matrix(rng, num_attrs, d))
        if num_attrs
        else np.zeros((0, d), dtype=np.float64)
    )
    concept_vecs = l2_normalize_rows(_normal_matrix(rng, k, d))
    concept_vecs[:n] = class_text
    if num_attrs:
        concept_vecs[n : n + num_attrs] = attr_pool
    class_attrs = [
        [(attrs_per_class * c + j) % num_attrs for j in range(attrs_per_class)]
        if num_attrs
        else []
        for c in range(n)
    ]

    concept_texts = (
        [f"prototype of class_{c:02d}" for c in range(n)]
        + [f"attribute_{i:02d}" for i in range(num_attrs)]
        + [f"distractor_{i:03d}" for i in range(k - n - num_attrs)]
    )

    def draw_split(per_class: int, split: str) -> FeatureBundle:
        feats = np.empty((n * per_class, d), dtype=np.float64)
        labels = np.empty(n * per_class, dtype=np.int64)
        pos = 0
        for c in range(n):
            for _ in range(per_class):
                base = centroids[c].copy()
                if class_attrs[c]:
                    r = class_attrs[c][rng.next_below(len(class_attrs[c]))]
                    base += attr_norm * attr_pool[r]
                noise = np.array(
                    [rng.next_normal() for _ in range(d)], dtype=np.float64
                )
                feats[pos] = base + coord_std * noise
                labels[pos] = c
                pos += 1
        feats = l2_normalize_rows(feats)
        meta = BundleMeta(
            prompt_class="",
            prompt_concept="",
            encoder="synthetic",
            dataset=f"synth-n{n}-d{d}-s{spec.sigma:g}-seed{spec.seed}",
            split=split,
            normalized=True,
        )
        return FeatureBundle(
            dim=d,
            image_features=feats.astype(np.float32),
            labels=labels,
            class_names=[f"class_{c:02d}" for c in range(n)],
            class_text_features=class_text.astype(np.float32),
            concept_texts=concept_texts,
            concept_text_features=concept_vecs.astype(np.float32),
            meta=meta,
        )

    train = draw_split(spec.train_per_class, "train")
    test = draw_split(spec.test_per_class, "test")
    return train, test
