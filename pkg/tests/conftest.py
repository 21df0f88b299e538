"""Shared fixtures: the frozen synthetic bundle pair used across tests."""

import pytest

from ccli.feature_store import SynthSpec, gen_synth

# The regression fixture every frozen accuracy value in the suite refers
# to. Do not change any field without re-measuring the frozen values.
FIXTURE_SPEC = SynthSpec(
    num_classes=10,
    dim=64,
    num_concepts=40,
    train_per_class=16,
    test_per_class=50,
    sigma=0.6,
    seed=7,
)


@pytest.fixture(scope="session")
def fixture_bundles():
    return gen_synth(FIXTURE_SPEC)


@pytest.fixture(scope="session")
def train_bundle(fixture_bundles):
    return fixture_bundles[0]


@pytest.fixture(scope="session")
def test_bundle(fixture_bundles):
    return fixture_bundles[1]


@pytest.fixture(scope="session")
def separable_bundles():
    """Near-zero spread: every image feature collapses onto its class
    vector, so any sane classifier is perfect."""
    spec = SynthSpec(
        num_classes=6,
        dim=32,
        num_concepts=12,
        train_per_class=4,
        test_per_class=8,
        sigma=1e-30,
        seed=3,
    )
    return gen_synth(spec)
