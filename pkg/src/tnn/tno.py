"""Toeplitz neural operator: encoder-generated coefficients, exponential
decay, optional causal masking, and the kernel paths composed into one
token-mixing transform with forward and backward passes.

Coefficient tables depend only on (net weights, decay, n), so inference
caches them per length and invalidates on weight updates via an explicit
version counter. Training never touches the cache: each step evaluates
fresh tables and keeps the intermediate buffers for the backward pass.
"""

import threading

import numpy as np

from tnn import rpe as rpe_mod
from tnn import toeplitz as tp
from tnn.errors import ConfigError, DimensionError, NumericError

KERNEL_PATHS = ("fft", "exact")


class ToeplitzOperator:
    """Per-channel Toeplitz mixing with decay bias and causal masking.

    decay_rate is a plain float in [0, 1] by default; pass a shape-(1,)
    array to make it learnable (the array is updated in place by the
    optimizer, and backward() then reports a "decay" gradient).
    """

    def __init__(
        self,
        net: rpe_mod.RpeNet,
        decay_rate=0.99,
        causal: bool = True,
        strategy: str = tp.DEFAULT_STRATEGY,
        unit_coeffs: bool = False,
    ):
        if strategy not in tp.STRATEGIES:
            raise ConfigError(f"strategy must be one of {tp.STRATEGIES}")
        self.net = net
        self.causal = bool(causal)
        self.strategy = strategy
        # diagnostic mode: encoder replaced by the all-ones table, exposing
        # the bare decay envelope lambda^|k|
        self.unit_coeffs = bool(unit_coeffs)
        self._decay = np.asarray(decay_rate, dtype=np.float64).reshape(-1)
        if self._decay.shape != (1,):
            raise ConfigError("decay_rate must be a scalar or shape-(1,) array")
        if not 0.0 <= float(self._decay[0]) <= 1.0:
            raise ConfigError(f"decay_rate must lie in [0, 1], got {float(self._decay[0])}")
        self.learn_decay = isinstance(decay_rate, np.ndarray)
        if self.learn_decay:
            self._decay = decay_rate.reshape(1)  # alias the caller's buffer
        self._version = 0
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def decay_rate(self) -> float:
        return float(self._decay[0])

    @property
    def channels(self) -> int:
        return self.net.config.out_dim

    def bump_version(self) -> None:
        """Invalidate cached coefficient tables after any weight update."""
        with self._lock:
            self._version += 1
            self._cache.clear()

    def decay_profile(self, n: int) -> np.ndarray:
        """Column [2n-1, 1] of lambda^|k| over offsets -(n-1)..(n-1); 0^0 := 1."""
        absk = np.abs(np.arange(-(n - 1), n, dtype=np.float64))[:, None]
        return np.power(self.decay_rate, absk)

    def _raw_table(self, n: int, keep_cache: bool):
        if self.unit_coeffs:
            values = np.ones((2 * n - 1, self.channels), dtype=self.net.weights[0].dtype)
            return values, None
        if keep_cache:
            coeffs, cache = rpe_mod.rpe_forward(self.net, n, keep_cache=True)
            return coeffs.values, cache
        return rpe_mod.rpe_forward(self.net, n).values, None

    def _effective_values(self, n: int, keep_cache: bool = False):
        raw, cache = self._raw_table(n, keep_cache)
        profile = self.decay_profile(n)
        if self.causal:
            profile[: n - 1] = 0.0
        effective = (profile * raw).astype(raw.dtype, copy=False)
        if self.causal:
            effective[: n - 1] = 0.0  # normalize -0.0 from the masked product
        return effective, raw, profile, cache

    def effective_coeffs(self, n: int) -> tp.RelPosCoefficients:
        """Decayed, masked coefficient table for length n (cached per version).

        With causal masking every strictly negative offset row is exactly
        zero; lambda=1 reproduces the raw encoder table bit-for-bit.
        """
        if n < 1:
            raise DimensionError(f"n must be >= 1, got {n}")
        with self._lock:
            hit = self._cache.get(n)
            if hit is not None and hit[0] == self._version:
                return hit[1]
        effective, _, _, _ = self._effective_values(n)
        coeffs = tp.RelPosCoefficients(effective)
        with self._lock:
            self._cache[n] = (self._version, coeffs)
        return coeffs

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        """Normalize to [batch, n, d] and validate."""
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise DimensionError(f"x must be [batch, n, d] or [n, d], got shape {x.shape}")
        if x.shape[2] != self.channels:
            raise DimensionError(
                f"x has {x.shape[2]} channels, operator expects {self.channels}"
            )
        if not np.isfinite(x).all():
            raise NumericError("x contains non-finite entries")
        return x

    def forward(self, x: np.ndarray, path: str = "fft") -> np.ndarray:
        """Apply the operator to [batch, n, d] (or [n, d]) input.

        path="fft" is the O(n log n) route used for training and bulk
        evaluation; path="exact" is the quadratic lower-triangular route
        whose causal outputs are bit-stable under suffix edits and length
        extension (causal operators only).
        """
        if path not in KERNEL_PATHS:
            raise ConfigError(f"path must be one of {KERNEL_PATHS}")
        if path == "exact" and not self.causal:
            raise ConfigError("exact path is defined for causal operators only")
        squeeze = x.ndim == 2
        xb = self._check_input(x)
        n = xb.shape[1]
        coeffs = self.effective_coeffs(n)
        if path == "exact":
            rows = [tp.causal_matvec(coeffs, xb[b]) for b in range(xb.shape[0])]
        else:
            plan = tp.prepare_fft(coeffs, self.strategy)
            rows = [tp.apply_fft(plan, xb[b]) for b in range(xb.shape[0])]
        y = np.stack(rows, axis=0)
        return y[0] if squeeze else y

    def forward_training(self, x: np.ndarray):
        """FFT forward with fresh (uncached) tables; returns (y, ctx) where
        ctx carries everything backward() needs."""
        squeeze = x.ndim == 2
        xb = self._check_input(x)
        n = xb.shape[1]
        effective, raw, profile, cache = self._effective_values(n, keep_cache=True)
        coeffs = tp.RelPosCoefficients(effective)
        plan = tp.prepare_fft(coeffs, self.strategy)
        y = np.stack([tp.apply_fft(plan, xb[b]) for b in range(xb.shape[0])], axis=0)
        ctx = {
            "x": xb,
            "coeffs": coeffs,
            "raw": raw,
            "profile": profile,
            "rpe_cache": cache,
            "squeeze": squeeze,
            "n": n,
        }
        return (y[0] if squeeze else y), ctx

    def backward(self, ctx: dict, grad_y: np.ndarray):
        """Chain rule through mask, decay, encoder, and the kernel.

        Returns (grad_x, grads) with grads holding "rpe_w{i}"/"rpe_b{i}"
        entries and, for learnable decay, a shape-(1,) "decay" entry.
        """
        xb = ctx["x"]
        gb = grad_y[None] if grad_y.ndim == 2 else grad_y
        if gb.shape != xb.shape:
            raise DimensionError(f"grad_y shape {grad_y.shape} != x shape {xb.shape}")
        coeffs = ctx["coeffs"]
        n = ctx["n"]
        grad_x = np.empty_like(xb)
        grad_eff = np.zeros_like(coeffs.values)
        for b in range(xb.shape[0]):
            gx, gc = tp.matvec_backward(coeffs, xb[b], gb[b], self.strategy)
            grad_x[b] = gx
            grad_eff += gc
        # effective = profile * raw with profile already causally masked,
        # so masked rows contribute nothing downstream
        profile = ctx["profile"]
        grads = {}
        if not self.unit_coeffs:
            grad_raw = (profile * grad_eff).astype(coeffs.values.dtype, copy=False)
            wg, bg = rpe_mod.rpe_backward(self.net, ctx["rpe_cache"], grad_raw)
            for i, (w, b) in enumerate(zip(wg, bg)):
                grads[f"rpe_w{i}"] = w
                grads[f"rpe_b{i}"] = b
        if self.learn_decay:
            absk = np.abs(np.arange(-(n - 1), n, dtype=np.float64))[:, None]
            lam = self.decay_rate
            # d lambda^|k| / d lambda = |k| lambda^{|k|-1}; the |k|=0 term is
            # identically zero, so it is excluded rather than evaluated
            dprof = np.where(absk >= 1.0, absk * np.power(lam, np.maximum(absk - 1.0, 0.0)), 0.0)
            if self.causal:
                dprof = dprof.copy()
                dprof[: n - 1] = 0.0
            grads["decay"] = np.array(
                [float(np.sum(grad_eff * ctx["raw"] * dprof))], dtype=np.float64
            )
        grad_x_out = grad_x[0] if ctx["squeeze"] else grad_x
        return grad_x_out, grads

    def clamp_decay(self) -> None:
        """Project a learnable decay back into [0, 1] after an update."""
        if self.learn_decay:
            np.clip(self._decay, 0.0, 1.0, out=self._decay)
