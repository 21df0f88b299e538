"""Acceptance gate: one test per release criterion.

Runs under pytest (`pytest tests/test_acceptance.py -v -s`) and directly
(`python3 tests/test_acceptance.py`); either way each criterion prints
one [PASS]/[FAIL] line.
"""

import math
import os
import sys
import time

import numpy as np

if __package__ in (None, ""):  # direct script execution
    sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
    from oracles import sampler_oracle
    from oracles.forward_oracle import forward_logits, top_k_by_score
else:
    from .oracles import sampler_oracle
    from .oracles.forward_oracle import forward_logits, top_k_by_score

from ccli.concepts import build_concept_bank, top_i_select
from ccli.evaluation import (
    concept_report,
    evaluate,
    evaluate_zero_shot,
    run_pipeline,
)
from ccli.feature_store import (
    FeatureBundle,
    SynthSpec,
    gen_synth,
    read_bundle,
    sample_episode,
    write_bundle,
)
from ccli.model import (
    Hyperparams,
    ModelParams,
    affinity,
    backward,
    forward,
    init_params,
    snap_to_f32,
    zero_shot_logits,
)
from ccli.numerics import l2_normalize_rows, softmax_ce
from ccli.trainer import (
    TrainConfig,
    effective_hyperparams,
    load_checkpoint,
    save_checkpoint,
    train,
)

FIXTURE_SPEC = SynthSpec(
    num_classes=10,
    dim=64,
    num_concepts=40,
    train_per_class=16,
    test_per_class=50,
    sigma=0.6,
    seed=7,
)
# Deterministic run configuration used for the accuracy criteria.
ACCEPT_CFG = dict(epochs=100, batch_size=32, lr=1e-3, seed=0)

_FIXTURE_CACHE = {}


def fixture_bundles():
    if "bundles" not in _FIXTURE_CACHE:
        _FIXTURE_CACHE["bundles"] = gen_synth(FIXTURE_SPEC)
    return _FIXTURE_CACHE["bundles"]


def _report(name, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    assert ok, name


def _random_params(rng, num_classes, num_concepts, dim):
    """Random instance in the model's operating regime: unit template
    rows and an O(1/sqrt(K)) integrator, keeping every branch O(1) so
    central differences are numerically trustworthy."""
    return ModelParams(
        w1=l2_normalize_rows(rng.normal(size=(num_concepts, dim))),
        w2=rng.normal(size=(num_classes, num_concepts)) * (0.5 / math.sqrt(num_concepts)),
        w3=l2_normalize_rows(rng.normal(size=(num_classes, dim))),
        z=rng.normal(size=(num_classes, dim)) * 0.1,
        f_t=l2_normalize_rows(rng.normal(size=(num_classes, dim))),
    )


def _fd_grad(v, labels, params, hp, name, h=1e-6):
    base = getattr(params, name)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        bumped = params.copy()
        t = base.copy()
        setattr(bumped, name, t)
        t[idx] = base[idx] + h
        up, _ = softmax_ce(forward(v, bumped, hp).logits, labels)
        t[idx] = base[idx] - h
        down, _ = softmax_ce(forward(v, bumped, hp).logits, labels)
        grad[idx] = (up - down) / (2 * h)
    return grad


def test_gradient_correctness():
    """20 random kink-avoiding instances: analytic vs central FD, 1e-4."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2718)
    checked = 0
    ok = True
    while checked < 20:
        params = _random_params(rng, num_classes=4, num_concepts=12, dim=8)
        v = l2_normalize_rows(rng.normal(size=(5, 8)))
        labels = rng.integers(0, 4, size=5).astype(np.int64)
        if np.abs(v @ params.w1.T).min() <= 1e-4:
            continue  # finite differences invalid near the ReLU kink
        checked += 1
        hp = Hyperparams()
        grads, _, _ = backward(v, labels, params, hp)
        for name, got in (
            ("w1", grads.w1),
            ("w2", grads.w2),
            ("w3", grads.w3),
            ("z", grads.z),
        ):
            fd = _fd_grad(v, labels, params, hp, name)
            # Per-entry 1e-4 relative with a 1e-8 floor that absorbs the
            # finite-difference noise on near-zero entries, plus a
            # whole-tensor relative check.
            entry_ok = (np.abs(got - fd) <= 1e-4 * np.abs(fd) + 1e-8).all()
            denom = max(np.linalg.norm(fd), 1e-12)
            tensor_ok = np.linalg.norm(got - fd) / denom <= 1e-4
            if not (entry_ok and tensor_ok):
                ok = False
    elapsed = time.perf_counter() - t0
    _report(
        f"gradient correctness (20 instances, {elapsed:.2f}s < 5s)",
        ok and elapsed < 5.0,
    )


def test_oracle_equivalence():
    """top_i_select, concept_report, forward logits vs brute force, 1e-12."""
    rng = np.random.default_rng(31415)
    ok = True

    for _ in range(100):
        sims = rng.normal(size=int(rng.integers(3, 30)))
        k = int(rng.integers(1, sims.size + 1))
        idx, w = top_i_select(sims, k)
        expected = top_k_by_score(list(sims), k)
        ok &= list(idx) == [i for i, _ in expected]
        ok &= np.array_equal(w, np.array([s for _, s in expected]))

    for _ in range(100):
        n, k_c, d = 3, 8, 6
        params = _random_params(rng, n, k_c, d)
        feats = rng.normal(size=(4, d)).astype(np.float32)
        bundle = FeatureBundle(
            dim=d,
            image_features=feats,
            labels=np.zeros(4, dtype=np.int64),
            class_names=[f"c{i}" for i in range(n)],
            class_text_features=rng.normal(size=(n, d)).astype(np.float32),
            concept_texts=[f"w{i}" for i in range(k_c)],
            concept_text_features=rng.normal(size=(k_c, d)).astype(np.float32),
        )
        i = int(rng.integers(0, 4))
        top_k = int(rng.integers(1, k_c + 1))
        got = concept_report(params, bundle, i, top_k)
        v = l2_normalize_rows(feats[i].astype(np.float64)[np.newaxis, :])
        scores = (v @ params.w1.T).ravel()
        expected = top_k_by_score(list(scores), top_k)
        ok &= [t for t, _ in got] == [bundle.concept_texts[j] for j, _ in expected]
        ok &= all(
            abs(s_got - s_want) <= 1e-12
            for (_, s_got), (_, s_want) in zip(got, expected)
        )

    for _ in range(100):
        n, k_c, d = 3, 8, 6
        batch = int(rng.integers(1, 5))
        params = _random_params(rng, n, k_c, d)
        v = l2_normalize_rows(rng.normal(size=(batch, d)))
        hp = Hyperparams()
        got = forward(v, params, hp).logits
        want = np.asarray(
            forward_logits(
                v.tolist(),
                params.w1.tolist(),
                params.w2.tolist(),
                params.w3.tolist(),
                params.z.tolist(),
                params.f_t.tolist(),
                hp.alpha,
                hp.lam,
                hp.delta,
                hp.eta,
                hp.beta,
            )
        )
        ok &= bool(
            (np.abs(got - want) <= 1e-12 + 1e-12 * np.abs(want)).all()
        )

    _report("oracle equivalence (3 ops x 100 instances, 1e-12)", ok)


def test_collapse_identity():
    """alpha=lambda=0, Z=0: argmax equals zero-shot argmax everywhere."""
    train_b, test_b = fixture_bundles()
    sep_train, sep_test = gen_synth(
        SynthSpec(
            num_classes=6,
            dim=32,
            num_concepts=12,
            train_per_class=4,
            test_per_class=8,
            sigma=1e-30,
            seed=3,
        )
    )
    extra_train, extra_test = gen_synth(
        SynthSpec(
            num_classes=5,
            dim=24,
            num_concepts=15,
            train_per_class=6,
            test_per_class=20,
            sigma=0.9,
            seed=123,
        )
    )
    ok = True
    for tr, te in (
        (train_b, test_b),
        (sep_train, sep_test),
        (extra_train, extra_test),
    ):
        episode = sample_episode(tr, 4, seed=0)
        bank = build_concept_bank(tr, episode, min(4, 4))
        params = init_params(bank, tr.class_text_features)
        hp = Hyperparams(alpha=0.0, lam=0.0)
        for bundle in (tr, te):
            v = bundle.normalized_image_features()
            model_pred = np.argmax(forward(v, params, hp).logits, axis=1)
            zs_pred = np.argmax(
                zero_shot_logits(
                    v,
                    snap_to_f32(bundle.normalized_class_text_features()),
                    hp.tau,
                ),
                axis=1,
            )
            ok &= bool(np.array_equal(model_pred, zs_pred))
    _report("collapse identity (exact argmax match on every sample)", ok)


def test_affinity_analytics():
    """Aff(1)=1 exactly; Aff(0)=exp(-4.5) to 1e-12; strict monotonicity."""
    ok = affinity(np.array([1.0]), 4.5)[0] == 1.0
    ok &= abs(affinity(np.array([0.0]), 4.5)[0] - math.exp(-4.5)) <= 1e-12
    rng = np.random.default_rng(99)
    x = np.unique(np.sort(rng.uniform(-1.5, 1.5, size=500)))
    y = affinity(x, 4.5)
    ok &= bool((np.diff(y) > 0).all())
    _report("affinity analytics (fixed point, exp(-4.5), monotone)", ok)


def test_synthetic_few_shot_gain():
    """16-shot beats zero-shot by >= 10 points; curve non-decreasing
    within 2 points per step; < 60 s."""
    t0 = time.perf_counter()
    train_b, test_b = fixture_bundles()
    zs = evaluate_zero_shot(test_b).overall_accuracy_pct
    accs = {}
    for shots in (1, 2, 4, 8, 16):
        cfg = TrainConfig(**ACCEPT_CFG)
        _, _, report = run_pipeline(train_b, test_b, cfg, shots, cfg.seed)
        accs[shots] = report.overall_accuracy_pct
    elapsed = time.perf_counter() - t0
    gain = accs[16] - zs
    curve = [accs[s] for s in (1, 2, 4, 8, 16)]
    monotone_ok = all(b >= a - 2.0 for a, b in zip(curve, curve[1:]))
    print(
        f"       zero-shot={zs:.1f}% shots curve="
        + " ".join(f"{s}:{accs[s]:.1f}" for s in (1, 2, 4, 8, 16))
        + f" gain@16={gain:+.1f}"
    )
    _report(
        f"synthetic few-shot gain (>=10 pts, monotone +/-2, {elapsed:.1f}s < 60s)",
        gain >= 10.0 and monotone_ok and elapsed < 60.0,
    )


def test_ablation_structure():
    """full >= CI-only >= zero-shot; dropping either concept family
    strictly lowers accuracy."""
    train_b, test_b = fixture_bundles()
    zs = evaluate_zero_shot(test_b).overall_accuracy_pct

    def run(**toggles):
        cfg = TrainConfig(**ACCEPT_CFG, **toggles)
        _, _, report = run_pipeline(train_b, test_b, cfg, 16, cfg.seed)
        return report.overall_accuracy_pct

    full = run()
    ci_only = run(disable_ta=True)
    no_desc = run(disable_description=True)
    no_class = run(disable_class=True)
    print(
        f"       full={full:.1f} ci_only={ci_only:.1f} zero_shot={zs:.1f} "
        f"no_desc={no_desc:.1f} no_class={no_class:.1f}"
    )
    ok = full >= ci_only >= zs and full > no_desc and full > no_class
    _report("ablation structure (full >= CI-only >= zero-shot; drops hurt)", ok)


def test_determinism_and_persistence(tmp_path=None):
    """Bitwise-identical checkpoints; bit-exact round-trips; sampler
    matches committed oracle vectors."""
    import tempfile

    train_b, test_b = fixture_bundles()
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        # identical configs -> bitwise-identical checkpoints
        paths = []
        for tag in ("a", "b"):
            cfg = TrainConfig(**ACCEPT_CFG)
            episode = sample_episode(train_b, 16, seed=cfg.seed)
            bank = build_concept_bank(train_b, episode, cfg.hyperparams.top_i)
            params, _ = train(train_b, episode, bank, cfg)
            path = os.path.join(tmp, f"ckpt_{tag}")
            save_checkpoint(path, params, cfg.hyperparams)
            paths.append(path)
        for name in ("w1.f32", "w2.f32", "w3.f32", "z.f32", "f_t.f32", "checkpoint.json"):
            with open(os.path.join(paths[0], name), "rb") as fa, open(
                os.path.join(paths[1], name), "rb"
            ) as fb:
                ok &= fa.read() == fb.read()

        # bundle round-trip bit-exact
        bpath = os.path.join(tmp, "bundle")
        write_bundle(train_b, bpath)
        loaded = read_bundle(bpath)
        ok &= np.array_equal(loaded.image_features, train_b.image_features)
        ok &= np.array_equal(loaded.labels, train_b.labels)
        ok &= np.array_equal(
            loaded.concept_text_features, train_b.concept_text_features
        )

        # checkpoint round-trip bit-exact + identical evaluation
        restored, hp_r, _ = load_checkpoint(paths[0])
        for name in ("w1", "w2", "w3", "z", "f_t"):
            ok &= np.array_equal(getattr(restored, name), getattr(params, name))
        before = evaluate(params, effective_hyperparams(cfg), test_b)
        after = evaluate(restored, effective_hyperparams(cfg), test_b)
        ok &= before.overall_accuracy_pct == after.overall_accuracy_pct

    # sampler vs committed oracle vectors (toy 3x4 layout, seed 42)
    toy_labels = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
    rng = np.random.default_rng(1)
    toy = FeatureBundle(
        dim=4,
        image_features=rng.normal(size=(12, 4)).astype(np.float32),
        labels=np.array(toy_labels, dtype=np.int64),
        class_names=["a", "b", "c"],
        class_text_features=rng.normal(size=(3, 4)).astype(np.float32),
        concept_texts=["x", "y", "z"],
        concept_text_features=rng.normal(size=(3, 4)).astype(np.float32),
    )
    ep = sample_episode(toy, 4, seed=42)
    ok &= np.array_equal(
        ep.indices, [[1, 2, 3, 0], [5, 7, 4, 6], [10, 9, 8, 11]]
    )
    ok &= np.array_equal(
        ep.indices, sampler_oracle.episode_indices(toy_labels, 3, 4, 42)
    )
    ep16 = sample_episode(train_b, 16, seed=31337)
    ok &= np.array_equal(
        ep16.indices,
        sampler_oracle.episode_indices(
            list(train_b.labels), train_b.num_classes, 16, 31337
        ),
    )
    _report("determinism & persistence (checkpoints, round-trips, sampler)", ok)


if __name__ == "__main__":
    failures = 0
    for fn in (
        test_gradient_correctness,
        test_oracle_equivalence,
        test_collapse_identity,
        test_affinity_analytics,
        test_synthetic_few_shot_gain,
        test_ablation_structure,
        test_determinism_and_persistence,
    ):
        try:
            fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
