"""Shared numeric test helpers.

Error metrics used throughout the suite:

* norm_rel_err(a, b): max absolute deviation normalized by the max
  magnitude of the reference. This is the standard normwise relative error
  for linear-algebra results; elementwise ratios are meaningless where the
  reference passes through zero.
* grad_rel_err(analytic, fd): elementwise relative error with a mixed
  floor of 1% of the largest finite-difference entry, the usual gradcheck
  convention. Central differences carry O(h^2) truncation plus roundoff,
  so entries far below the gradient's own scale are judged against that
  scale instead of their own.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")


def norm_rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def grad_rel_err(analytic, fd) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    floor = 0.01 * max(float(np.abs(fd).max(initial=0.0)), 1e-8)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
    return float((np.abs(analytic - fd) / denom).max(initial=0.0))


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f() with respect to array x.

    f must read x by reference (the buffer is perturbed in place and
    restored), and must not cache anything across calls.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = float(f())
        flat_x[i] = orig - h
        fm = float(f())
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
