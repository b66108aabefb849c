import numpy as np
import pytest

from biofed.data import synthesize


@pytest.fixture(scope="session")
def small_dataset():
    """3 classes x 6 samples of 1x8x8 textures; shared read-only."""
    ds = synthesize(3, 6, (1, 8, 8), seed=0, noise=0.05)
    ds.x.setflags(write=False)
    ds.y.setflags(write=False)
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(0)
