import numpy as np
import pytest

from b1predictor import synth
from b1predictor.train import TrainConfig, train

DESK_SEED = 0
DESK_GRID = 64


def desk_config():
    """2 subjects, 40 epochs: the documented desk-scale training setup."""
    return TrainConfig(patches_per_subject=60, epochs=40, learning_rate=1e-3,
                       batch_size=16, validation_fraction=0.2, seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_cohort():
    return synth.synthesize_cohort(2, DESK_GRID, seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_training(desk_cohort):
    """One desk-scale training run shared by the acceptance tests."""
    return train(desk_cohort, desk_config())


@pytest.fixture(scope="session")
def holdout_subject():
    """A subject the desk model never saw (different seed stream)."""
    rng = np.random.default_rng(777)
    params = synth.draw_subject_params(rng, DESK_GRID * synth.VOXEL_MM)
    return synth.realize(params, DESK_GRID)
