import numpy as np
import pytest
from hypothesis import settings

from lyaplab.config import sic_measure

settings.register_profile("lyaplab", max_examples=60, deadline=None)
settings.load_profile("lyaplab")


@pytest.fixture(scope="session")
def sic():
    return sic_measure()


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def random_sl(gen, d, count, scale=1.0):
    """Random real matrices rescaled to determinant 1 (sign fixed by a row flip)."""
    a = gen.normal(size=(count, d, d)) * scale + np.eye(d)
    det = np.linalg.det(a)
    a[det < 0, 0, :] *= -1
    return a / np.abs(det)[:, None, None] ** (1.0 / d)
