import numpy as np
import pytest


@pytest.fixture
def noise_image():
    """Seeded white-noise image, the workhorse input for blur properties."""
    rng = np.random.default_rng(1234)
    return rng.random((32, 32))


@pytest.fixture
def smooth_image():
    """Smooth low-frequency test image for blur-composition checks."""
    yy, xx = np.mgrid[0:48, 0:48] / 47.0
    return 0.5 + 0.3 * np.sin(2 * np.pi * xx) * np.cos(2 * np.pi * yy)
