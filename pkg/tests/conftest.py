import numpy as np
import pytest

import sdlab as S

# Session-scoped trained models so the expensive pretraining happens once.


@pytest.fixture(scope="session")
def sched():
    return S.make_schedule(1000, "cosine")


@pytest.fixture(scope="session")
def ring_data():
    return S.generate_dataset(S.ring_mixture_spec(), 4000, 0)


@pytest.fixture(scope="session")
def ring_denoiser(ring_data, sched):
    return S.train_denoiser(ring_data, S.TrainConfig(steps=3000, seed=0), sched)


@pytest.fixture(scope="session")
def ring_classifier(ring_data):
    return S.train_classifier_reward(ring_data, S.TrainConfig(steps=3000, seed=1))


@pytest.fixture(scope="session")
def bimodal_data():
    return S.generate_dataset(S.bimodal_ring_spec(), 4000, 0)


@pytest.fixture(scope="session")
def bimodal_denoiser(bimodal_data, sched):
    return S.train_denoiser(bimodal_data, S.TrainConfig(steps=3000, seed=0), sched)


@pytest.fixture(scope="session")
def bimodal_classifier(bimodal_data):
    return S.train_classifier_reward(bimodal_data, S.TrainConfig(steps=3000, seed=1))


@pytest.fixture(scope="session")
def grid_data():
    return S.generate_dataset(S.grid_shape_spec(), 4000, 0)


@pytest.fixture(scope="session")
def grid_denoiser(grid_data, sched):
    return S.train_denoiser(grid_data, S.TrainConfig(steps=3000, seed=0), sched)


@pytest.fixture(scope="session")
def grid_classifier(grid_data):
    return S.train_classifier_reward(grid_data, S.TrainConfig(steps=3000, seed=1))


@pytest.fixture(scope="session")
def bimodal_grid_data():
    return S.generate_dataset(S.bimodal_grid_spec(), 4000, 0)


@pytest.fixture(scope="session")
def bimodal_grid_denoiser(bimodal_grid_data, sched):
    return S.train_denoiser(bimodal_grid_data, S.TrainConfig(steps=3000, seed=0), sched)


@pytest.fixture(scope="session")
def bimodal_grid_classifier(bimodal_grid_data):
    return S.train_classifier_reward(bimodal_grid_data, S.TrainConfig(steps=3000, seed=1))


@pytest.fixture()
def tiny_denoiser(sched):
    """Untrained denoiser with random weights, for gradient/reduction checks."""
    d = S.MlpDenoiser(2, 4, sched.T, hidden=(16, 16))
    d.init_params(np.random.default_rng(7))
    return d
