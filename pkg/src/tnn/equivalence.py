"""Constructive special-case maps: a 1D convolution and a linear state-space
model each compile into an exactly equivalent Toeplitz operator, and the
linear-bias attention trick is the exponential decay profile in disguise.

Each map ships with its independent oracle (direct convolution sum,
step-by-step recurrence) so the equivalences are checkable end to end
through the fast kernel.
"""

from dataclasses import dataclass

import numpy as np

from tnn.errors import DimensionError, NumericError
from tnn.toeplitz import DEFAULT_STRATEGY, RelPosCoefficients, fft_matvec


@dataclass(frozen=True)
class ConvKernel:
    """Finite impulse response taps h_0..h_{m-1}."""

    taps: np.ndarray

    def __post_init__(self):
        t = self.taps
        if t.ndim != 1 or t.shape[0] < 1:
            raise DimensionError(f"taps must be a 1-D array with m >= 1, got shape {t.shape}")
        if not np.isfinite(t).all():
            raise ValueError("taps contain non-finite entries")

    @property
    def width(self) -> int:
        return self.taps.shape[0]


@dataclass(frozen=True)
class StateSpaceParams:
    """u_i = A u_{i-1} + B x_i; y_i = C u_i, with zero initial state."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        h = self.a.shape[0]
        if self.a.shape != (h, h) or self.b.shape != (h, 1) or self.c.shape != (1, h):
            raise DimensionError(
                f"need A [h,h], B [h,1], C [1,h]; got {self.a.shape}, {self.b.shape}, {self.c.shape}"
            )
        if not all(np.isfinite(m).all() for m in (self.a, self.b, self.c)):
            raise ValueError("state-space matrices contain non-finite entries")

    @property
    def state_dim(self) -> int:
        return self.a.shape[0]


# -- convolution ------------------------------------------------------------


def direct_convolution(kernel: ConvKernel, x: np.ndarray) -> np.ndarray:
    """Oracle: y_i = sum_j h_j x_{i-j}, full output of length n + m - 1."""
    if x.ndim != 1:
        raise DimensionError("x must be 1-D")
    n, m = x.shape[0], kernel.width
    y = np.zeros(n + m - 1, dtype=np.float64)
    for i in range(n + m - 1):
        for j in range(m):
            if 0 <= i - j < n:
                y[i] += kernel.taps[j] * x[i - j]
    return y


def conv_to_toeplitz(kernel: ConvKernel, n: int) -> RelPosCoefficients:
    """Toeplitz coefficients over size n + m - 1 realizing the convolution.

    t_k = h_k for 0 <= k <= m-1 and zero elsewhere; applied to the padded
    input pad_for_conv(x, m), the product is the full convolution.
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    m = kernel.width
    size = n + m - 1
    values = np.zeros((2 * size - 1, 1), dtype=np.float64)
    values[size - 1 : size - 1 + m, 0] = kernel.taps
    return RelPosCoefficients(values)


def pad_for_conv(x: np.ndarray, width: int) -> np.ndarray:
    """z = [x; 0_{m-1}], the padding rule matching conv_to_toeplitz."""
    return np.concatenate([np.asarray(x, dtype=np.float64), np.zeros(width - 1)])


def conv_via_toeplitz(kernel: ConvKernel, x: np.ndarray, strategy: str = DEFAULT_STRATEGY):
    coeffs = conv_to_toeplitz(kernel, x.shape[0])
    z = pad_for_conv(x, kernel.width)
    return fft_matvec(coeffs, z[:, None], strategy)[:, 0]


# -- state space -------------------------------------------------------------


def spectral_radius_estimate(a: np.ndarray, iters: int = 60) -> float:
    """Power-iteration estimate of the largest |eigenvalue| (geometric mean
    of late-stage growth ratios, robust to complex pairs)."""
    h = a.shape[0]
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(h)
    v /= max(np.linalg.norm(v), 1e-300)
    ratios = []
    for _ in range(iters):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        ratios.append(norm)
        v = w / norm
    tail = np.array(ratios[-10:])
    return float(np.exp(np.mean(np.log(np.maximum(tail, 1e-300)))))


def sample_stable(rng: np.random.Generator, state_dim: int, radius: float = 0.9):
    """Random system with A scaled to an estimated spectral radius <= radius."""
    a = rng.standard_normal((state_dim, state_dim))
    est = spectral_radius_estimate(a)
    if est > 0.0:
        a = a * (radius / est)
    b = rng.standard_normal((state_dim, 1))
    c = rng.standard_normal((1, state_dim))
    return StateSpaceParams(a=a, b=b, c=c)


_OVERFLOW_LIMIT = 1e100


def ssm_kernel(params: StateSpaceParams, n: int) -> np.ndarray:
    """k_j = C A^j B by iterated matrix-vector products (A^j never formed)."""
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    k = np.empty(n, dtype=np.float64)
    state = params.b[:, 0].astype(np.float64)
    for j in range(n):
        k[j] = float(params.c[0] @ state)
        if abs(k[j]) > _OVERFLOW_LIMIT or not np.isfinite(k[j]):
            radius = spectral_radius_estimate(params.a)
            raise NumericError(
                f"kernel overflow at tap {j}; estimated spectral radius {radius:.3f} "
                "(stable systems need radius < 1)"
            )
        state = params.a @ state
    return k


def ssm_simulate(params: StateSpaceParams, x: np.ndarray) -> np.ndarray:
    """Oracle: run the recurrence itself from zero initial state."""
    if x.ndim != 1:
        raise DimensionError("x must be 1-D")
    state = np.zeros(params.state_dim, dtype=np.float64)
    y = np.empty(x.shape[0], dtype=np.float64)
    for i, xi in enumerate(x):
        state = params.a @ state + params.b[:, 0] * float(xi)
        y[i] = float(params.c[0] @ state)
    return y


def ssm_to_toeplitz(params: StateSpaceParams, n: int) -> RelPosCoefficients:
    """Lower-triangular Toeplitz coefficients: t_k = k_k for k >= 0, else 0."""
    kern = ssm_kernel(params, n)
    values = np.zeros((2 * n - 1, 1), dtype=np.float64)
    values[n - 1 :, 0] = kern
    return RelPosCoefficients(values)


def ssm_via_toeplitz(params: StateSpaceParams, x: np.ndarray, strategy: str = DEFAULT_STRATEGY):
    coeffs = ssm_to_toeplitz(params, x.shape[0])
    return fft_matvec(coeffs, np.asarray(x, dtype=np.float64)[:, None], strategy)[:, 0]


# -- linear-bias attention ----------------------------------------------------


def alibi_decay_rate(slope: float) -> float:
    """The decay rate realizing a linear attention bias with slope m <= 0:
    exp(s + m|i-j|) factors as exp(s) * lambda^|i-j| with lambda = exp(m)."""
    if slope > 0.0:
        raise ValueError(f"slope must be <= 0, got {slope}")
    return float(np.exp(slope))


def alibi_bias(score: float, slope: float, offsets: np.ndarray) -> np.ndarray:
    """exp(s + m|k|), the exponentiated biased attention score."""
    return np.exp(score + slope * np.abs(offsets))


def alibi_via_decay(score: float, slope: float, offsets: np.ndarray) -> np.ndarray:
    """The same quantity through the decay factorization exp(s) * lambda^|k|."""
    lam = alibi_decay_rate(slope)
    return np.exp(score) * lam ** np.abs(offsets).astype(np.float64)
