"""Pure-numpy quadratic Toeplitz kernels.

Fallback for tnn._kernels_c with the identical surface. Both paths are
honest O(n^2 d): no FFT shortcuts here.
"""

import numpy as np

BACKEND = "py"


def naive_matvec(values, x, out):
    """out[i, c] = sum_j values[i - j + n - 1, c] * x[j, c]. Overwrites out."""
    n = x.shape[0]
    # Reversed view turns row i of T into the contiguous slice rev[n-1-i : 2n-1-i].
    rev = values[::-1]
    for i in range(n):
        np.sum(rev[n - 1 - i : 2 * n - 1 - i] * x, axis=0, out=out[i])


def coeff_grad(grad_y, x, out):
    """out[k + n - 1, c] += sum_{i - j = k} grad_y[i, c] * x[j, c]. Accumulates."""
    n = x.shape[0]
    for k in range(-(n - 1), n):
        i0 = max(0, k)
        i1 = min(n - 1, n - 1 + k)
        out[k + n - 1] += np.sum(grad_y[i0 : i1 + 1] * x[i0 - k : i1 - k + 1], axis=0)


def causal_naive_matvec(values, x, out):
    """out[i, c] = sum_{j <= i} values[i - j + n - 1, c] * x[j, c]. Overwrites out.

    Never reads x beyond position i or any negative-offset row, so output
    position i is bit-identical under suffix edits and length extension.
    """
    n = x.shape[0]
    rev = values[::-1]
    for i in range(n):
        # offsets i..0 reversed to pair rev rows with x[0..i]
        np.sum(rev[n - 1 - i : n] * x[: i + 1], axis=0, out=out[i])
