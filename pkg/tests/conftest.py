import warnings

import numpy as np
import pytest

from hairadapt.config import AdaptationConfig
from hairadapt.synthetic import body_pair, grow_hairstyle, synthetic_body

warnings.filterwarnings("ignore", message=".*fewer than k.*")


@pytest.fixture(scope="session")
def small_pair():
    return body_pair(rings=14, segments=20)


@pytest.fixture(scope="session")
def small_body(small_pair):
    return small_pair[0]


@pytest.fixture(scope="session")
def small_hair(small_body):
    return grow_hairstyle(small_body, n_strands=40, n_particles=7, seed=11)


@pytest.fixture(scope="session")
def config():
    return AdaptationConfig()


@pytest.fixture(scope="session")
def scalp_scene():
    """Denser head + hair for scalp/membrane tests."""
    body = synthetic_body(rings=20, segments=30)
    hair = grow_hairstyle(body, n_strands=500, n_particles=4, seed=4, cap_angle_deg=55)
    return body, hair


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
