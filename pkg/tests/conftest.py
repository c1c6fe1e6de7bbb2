import os
import sys

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

sys.path.insert(0, os.path.dirname(__file__))

from planeflow.imgcore import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise_image(rng, height, width, channels=3, lo=0.1, hi=0.9):
    return Image(rng.uniform(lo, hi, (height, width, channels)))


def smooth_noise_image(rng, height, width, channels=3, sigma=1.2, amplitude=0.3):
    """Band-limited noise texture (robust to sub-pixel resampling)."""
    base = rng.standard_normal((height, width, channels))
    tex = gaussian_filter(base, sigma=(sigma, sigma, 0))
    std = tex.std()
    tex = 0.5 + amplitude * (tex - tex.mean()) / (3.0 * std)
    return Image(np.clip(tex, 0.02, 0.98))


@pytest.fixture
def small_pair(rng):
    """A 32x32 pair where the second image is the first shifted by (+4, 0)."""
    a = noise_image(rng, 32, 32, 1)
    b = Image(np.roll(a.data, 4, axis=1).copy())
    return a, b
