"""Toeplitz matrix-vector products: exact quadratic reference and FFT fast path.

Conventions used everywhere in this package:

* An n x n Toeplitz matrix per channel is described by 2n-1 coefficients
  t_k, one per relative offset k in {-(n-1), ..., n-1}. The coefficient for
  offset k lives at row k + (n-1) of a [2n-1, d] array, so T[i, j] =
  values[i - j + n - 1].
* The fast path embeds T in an N x N circulant (N >= 2n-1), multiplies via
  the circular convolution theorem, and keeps the first n rows. Two
  embedding strategies are supported: "paper_2n" (N = 2n, the fidelity
  reference) and "padded_pow2" (N = next power of two >= 2n-1, the default;
  power-of-two FFTs are uniformly fast).

The quadratic kernels live behind tnn._backend (compiled extension with a
numpy fallback). The FFT itself is numpy's pocketfft; the contract is only
that inverse(forward(x)) == x with a consistent normalization.
"""

from dataclasses import dataclass

import numpy as np

from tnn import _backend
from tnn.errors import DimensionError, NumericError

STRATEGIES = ("padded_pow2", "paper_2n")
DEFAULT_STRATEGY = "padded_pow2"

# Test-only switch: perturbs the paper_2n fast path so harness sensitivity
# can be demonstrated. Never set outside diagnostics.
_FAULT_INJECTION = False


def set_fault_injection(enabled: bool) -> None:
    """Enable/disable the deliberate paper_2n fault (diagnostic use only)."""
    global _FAULT_INJECTION
    _FAULT_INJECTION = bool(enabled)


@dataclass(frozen=True)
class RelPosCoefficients:
    """Per-offset, per-channel Toeplitz generators.

    values: [2n-1, d] real array; row k + (n-1) holds the coefficient for
    relative offset k, for every channel.
    """

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] % 2 == 0 or v.shape[0] < 1:
            raise DimensionError(
                f"coefficient array must be [2n-1, d] with n >= 1, got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise NumericError("coefficient array contains non-finite entries")

    @property
    def length(self) -> int:
        return (self.values.shape[0] + 1) // 2

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def offset_row(self, k: int) -> int:
        """Row index of offset k (bijective for |k| <= n-1)."""
        n = self.length
        if abs(k) > n - 1:
            raise DimensionError(f"offset {k} outside [-(n-1), n-1] for n={n}")
        return k + n - 1

    def reversed_offsets(self) -> "RelPosCoefficients":
        """Coefficients of the transposed operator: t'_k = t_{-k}."""
        return RelPosCoefficients(np.ascontiguousarray(self.values[::-1]))


@dataclass(frozen=True)
class CirculantSpec:
    """First column of the circulant embedding of a Toeplitz matrix.

    first_column: [N, d]; the induced circulant is C[i, j] =
    first_column[(i - j) mod N], whose top-left n x n block equals T exactly.
    """

    embed_size: int
    first_column: np.ndarray
    strategy: str

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.first_column.shape[0] != self.embed_size:
            raise DimensionError("first_column length disagrees with embed_size")


def identity_coefficients(n: int, d: int, dtype=np.float64) -> RelPosCoefficients:
    """Coefficients of the identity operator: t_0 = 1, all other offsets 0."""
    values = np.zeros((2 * n - 1, d), dtype=dtype)
    values[n - 1] = 1.0
    return RelPosCoefficients(values)


def next_pow2(m: int) -> int:
    """Smallest power of two >= m."""
    return 1 << max(m - 1, 0).bit_length() if m > 1 else 1


def _check_pair(coeffs: RelPosCoefficients, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise DimensionError(f"x must be [n, d], got shape {x.shape}")
    n, d = x.shape
    if n != coeffs.length or d != coeffs.channels:
        raise DimensionError(
            f"x shape {x.shape} does not match coefficients (n={coeffs.length}, d={coeffs.channels})"
        )
    if not np.isfinite(x).all():
        raise NumericError("x contains non-finite entries")
    return x


def naive_matvec(coeffs: RelPosCoefficients, x: np.ndarray) -> np.ndarray:
    """Exact per-channel y_i = sum_j t_{i-j} x_j in O(n^2 d).

    This is the oracle every fast path is checked against.
    """
    _check_pair(coeffs, x)
    dtype = np.result_type(coeffs.values.dtype, x.dtype)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    values = np.ascontiguousarray(coeffs.values, dtype=dtype)
    xc = np.ascontiguousarray(x, dtype=dtype)
    out = np.empty_like(xc)
    _backend.naive_matvec(values, xc, out)
    return out


def build_circulant(coeffs: RelPosCoefficients, strategy: str = DEFAULT_STRATEGY) -> CirculantSpec:
    """Embed the 2n-1 Toeplitz generators into a circulant first column.

    paper_2n: N = 2n with c = [t_0..t_{n-1}, t_0, t_{-(n-1)}..t_{-1}]
    (the c_n slot never reaches the first n output rows; t_0 is the
    conventional filler). padded_pow2: N = next power of two >= 2n-1 with
    zeros between the non-negative and negative offset runs.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    v = coeffs.values
    n, d = coeffs.length, coeffs.channels
    neg = v[: n - 1]  # offsets -(n-1)..-1, ascending
    nonneg = v[n - 1 :]  # offsets 0..n-1, ascending
    if strategy == "paper_2n":
        column = np.concatenate([nonneg, v[n - 1 : n], neg], axis=0)
    else:
        size = next_pow2(2 * n - 1)
        gap = np.zeros((size - (2 * n - 1), d), dtype=v.dtype)
        column = np.concatenate([nonneg, gap, neg], axis=0)
    return CirculantSpec(embed_size=column.shape[0], first_column=column, strategy=strategy)


def toeplitz_dense(coeffs: RelPosCoefficients) -> np.ndarray:
    """Materialize T as an [n, n, d] array by pure indexing (test/debug aid)."""
    n = coeffs.length
    rows = np.arange(n)[:, None] - np.arange(n)[None, :] + n - 1
    return coeffs.values[rows]


def circulant_dense(spec: CirculantSpec) -> np.ndarray:
    """Materialize the circulant as [N, N, d] by pure indexing (test/debug aid)."""
    size = spec.embed_size
    rows = (np.arange(size)[:, None] - np.arange(size)[None, :]) % size
    return spec.first_column[rows]


@dataclass(frozen=True)
class FftPlan:
    """Precomputed DFT of a circulant column, reusable across inputs.

    Applying the plan to any [n, d] input is bit-identical to a one-shot
    fft_matvec with the same coefficients and strategy, so batches can share
    one plan without perturbing per-item results.

    The spectrum is held channel-major so each length-N transform runs over
    contiguous memory; this keeps the per-transform working set small and
    the cost near N log N even when the full batch no longer fits in cache.
    """

    length: int
    channels: int
    strategy: str
    size: int
    column_fft: np.ndarray  # [d, size//2 + 1] spectrum of the real column


def prepare_fft(coeffs: RelPosCoefficients, strategy: str = DEFAULT_STRATEGY) -> FftPlan:
    spec = build_circulant(coeffs, strategy)
    column = np.ascontiguousarray(spec.first_column.T)
    return FftPlan(
        length=coeffs.length,
        channels=coeffs.channels,
        strategy=strategy,
        size=column.shape[1],
        column_fft=np.fft.rfft(column, axis=1),
    )


# Per-chunk transform buffers stay around this size so they remain
# cache-resident and malloc recycles them instead of faulting fresh pages
# on every call at large n.
_CHUNK_BYTES = 1 << 21


def apply_fft(plan: FftPlan, x: np.ndarray) -> np.ndarray:
    """Multiply by the planned circulant and keep the first n rows."""
    if x.ndim != 2 or x.shape != (plan.length, plan.channels):
        raise DimensionError(
            f"x shape {x.shape} does not match plan (n={plan.length}, d={plan.channels})"
        )
    n = plan.length
    xt = np.ascontiguousarray(x.T, dtype=np.float64)
    out = np.empty((plan.channels, n), dtype=np.float64)
    step = max(1, _CHUNK_BYTES // (plan.size * 16))
    padded = np.zeros((min(step, plan.channels), plan.size), dtype=np.float64)
    for c0 in range(0, plan.channels, step):
        c1 = min(c0 + step, plan.channels)
        block = padded[: c1 - c0]
        block[:, :n] = xt[c0:c1]
        prod = np.fft.rfft(block, axis=1)
        prod *= plan.column_fft[c0:c1]
        out[c0:c1] = np.fft.irfft(prod, n=plan.size, axis=1)[:, :n]
    y = np.ascontiguousarray(out.T).astype(x.dtype, copy=False)
    if _FAULT_INJECTION and plan.strategy == "paper_2n":
        y = y.copy()
        y[0, 0] += 1e-3
    if not np.isfinite(y).all():
        raise NumericError("non-finite values in FFT Toeplitz product (overflow?)")
    return y


def fft_matvec(
    coeffs: RelPosCoefficients, x: np.ndarray, strategy: str = DEFAULT_STRATEGY
) -> np.ndarray:
    """O(n log n) per-channel Toeplitz product via circulant embedding.

    Pads x with zeros to the embedding size N, multiplies the DFTs of the
    circulant column and the padded input elementwise, inverse-transforms,
    and keeps the first n rows. Matches naive_matvec to roundoff.
    """
    _check_pair(coeffs, x)
    return apply_fft(prepare_fft(coeffs, strategy), x)


def causal_matvec(coeffs: RelPosCoefficients, x: np.ndarray) -> np.ndarray:
    """Lower-triangular product y_i = sum_{j <= i} t_{i-j} x_j, exactly causal.

    Reads neither x beyond position i nor any negative-offset coefficient,
    so position i's bits cannot move under suffix edits or length extension
    (given length-independent coefficients). This is the causal inference
    path; the FFT path is causal only to roundoff.
    """
    _check_pair(coeffs, x)
    dtype = np.result_type(coeffs.values.dtype, x.dtype)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    values = np.ascontiguousarray(coeffs.values, dtype=dtype)
    xc = np.ascontiguousarray(x, dtype=dtype)
    out = np.empty_like(xc)
    _backend.causal_naive_matvec(values, xc, out)
    return out


def matvec_backward(
    coeffs: RelPosCoefficients,
    x: np.ndarray,
    grad_y: np.ndarray,
    strategy: str = DEFAULT_STRATEGY,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of the Toeplitz product.

    grad_x = T^T grad_y (offset-reversed coefficients through the fast
    path); grad_coeffs[k] = sum_{i-j=k} grad_y_i x_j, a cross-correlation
    computed with one FFT pass per channel.
    """
    _check_pair(coeffs, x)
    if grad_y.shape != x.shape:
        raise DimensionError(f"grad_y shape {grad_y.shape} != x shape {x.shape}")
    n = coeffs.length
    grad_x = fft_matvec(coeffs.reversed_offsets(), grad_y, strategy)

    size = next_pow2(2 * n - 1) if strategy == "padded_pow2" else 2 * n
    work = np.result_type(x.dtype, np.float64)
    g_pad = np.zeros((size, x.shape[1]), dtype=work)
    g_pad[:n] = grad_y
    x_pad = np.zeros((size, x.shape[1]), dtype=work)
    x_pad[:n] = x
    corr = np.fft.ifft(np.fft.fft(g_pad, axis=0) * np.conj(np.fft.fft(x_pad, axis=0)), axis=0).real
    # Circular lag m holds sum_i g[i] x[(i-m) mod N]; lags 0..n-1 are offsets
    # 0..n-1 and lags N-(n-1)..N-1 are offsets -(n-1)..-1.
    grad_coeffs = np.concatenate([corr[size - (n - 1) :], corr[:n]], axis=0)
    grad_coeffs = grad_coeffs.astype(x.dtype, copy=False)
    if not (np.isfinite(grad_x).all() and np.isfinite(grad_coeffs).all()):
        raise NumericError("non-finite values in Toeplitz backward pass")
    return grad_x, grad_coeffs


def naive_matvec_backward(
    coeffs: RelPosCoefficients, x: np.ndarray, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic reference for matvec_backward (oracle/benchmark path)."""
    _check_pair(coeffs, x)
    if grad_y.shape != x.shape:
        raise DimensionError(f"grad_y shape {grad_y.shape} != x shape {x.shape}")
    grad_x = naive_matvec(coeffs.reversed_offsets(), grad_y)
    dtype = grad_x.dtype
    gc = np.ascontiguousarray(grad_y, dtype=dtype)
    xc = np.ascontiguousarray(x, dtype=dtype)
    grad_coeffs = np.zeros_like(np.ascontiguousarray(coeffs.values, dtype=dtype))
    _backend.coeff_grad(gc, xc, grad_coeffs)
    return grad_x, grad_coeffs
