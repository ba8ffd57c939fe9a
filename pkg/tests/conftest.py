"""Shared fixtures: seeded random volumes and a small noisy phantom pair."""

import numpy as np
import pytest

import tbf


def random_volume(dims, seed, lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    n = dims[0] * dims[1] * dims[2]
    return tbf.Volume(dims, rng.uniform(lo, hi, size=n))


@pytest.fixture(scope="session")
def phantom_pair():
    """(clean, noisy) 64x64 single-slice phantom with 10% Gaussian noise."""
    spec = tbf.random_phantom((64, 64, 1), n_primitives=6, seed=0)
    clean = tbf.generate_phantom(spec)
    noisy = tbf.add_noise(clean, tbf.GaussianNoise(0.1), seed=0)
    return clean, noisy
