import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from stepwave import synth
from stepwave.neural import TrainConfig


@pytest.fixture(scope="session")
def tiny_cohort(tmp_path_factory) -> Path:
    """Small sighted cohort for fast pipeline tests: 3 people x 2 paths x 24 s."""
    out = tmp_path_factory.mktemp("tiny_cohort")
    spec = synth.default_cohort_spec(
        n_participants=3, paths_per_participant=2, duration_s=24.0, seed=7
    )
    synth.generate_cohort(spec, out)
    return out


@pytest.fixture()
def fast_train_config() -> TrainConfig:
    return TrainConfig(
        timesteps=50,
        batch_size=64,
        training_steps=8,
        hidden_sizes=(8, 8),
        dropout_rate=0.1,
        seed=3,
    )
