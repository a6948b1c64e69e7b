from __future__ import annotations

import numpy as np
import pytest

from dynreg.kernels import horizon_free_kernel


@pytest.fixture(scope="session")
def hf64():
    return horizon_free_kernel(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def spline_features(rounds, n):
    """Explicit features for min(s, t): phi(t)_i = 1 if i <= t."""
    rounds = np.asarray(rounds)
    return (np.arange(1, n + 1)[None, :] <= rounds[:, None]).astype(float)
