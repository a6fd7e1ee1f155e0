"""Relative position encoder: a small fully connected network mapping each
relative offset to a d-channel coefficient vector.

The encoder is what decouples parameter count from sequence length: the
Toeplitz generators for any n are produced by evaluating one fixed net at
the 2n-1 integer offsets. Evaluation is row-by-row (one gemv per offset)
rather than one big gemm on purpose: the value computed for offset k must
be bit-identical no matter which other offsets share the batch, otherwise
a model trained at one length would see perturbed coefficients at another.
"""

from dataclasses import dataclass, field

import numpy as np

from tnn import activations
from tnn.errors import ConfigError, DimensionError, NumericError, OffsetRangeError
from tnn.toeplitz import RelPosCoefficients

ACTIVATIONS = ("relu", "silu")
INPUT_MODES = ("raw_integer", "normalized", "sincos")
SINCOS_PAIRS = 4
SINCOS_WIDTH = 2 * SINCOS_PAIRS


@dataclass(frozen=True)
class RpeConfig:
    """Shape of the encoder net.

    layers counts every affine transform including the linear output layer,
    so layers=1 is a single affine map from the encoded offset to d channels.
    """

    out_dim: int
    layers: int = 3
    hidden_dim: int = 32
    activation: str = "relu"
    input_mode: str = "raw_integer"

    def __post_init__(self):
        if self.layers < 1 or self.hidden_dim < 1 or self.out_dim < 1:
            raise ConfigError("rpe layers, hidden_dim, and out_dim must all be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"rpe activation must be one of {ACTIVATIONS}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"rpe input_mode must be one of {INPUT_MODES}")

    @property
    def input_width(self) -> int:
        return SINCOS_WIDTH if self.input_mode == "sincos" else 1

    def layer_widths(self) -> list:
        """Width sequence [in, h, ..., h, out] across the K affine layers."""
        return [self.input_width] + [self.hidden_dim] * (self.layers - 1) + [self.out_dim]


@dataclass
class RpeNet:
    config: RpeConfig
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def validate(self) -> None:
        widths = self.config.layer_widths()
        if len(self.weights) != self.config.layers or len(self.biases) != self.config.layers:
            raise DimensionError("rpe net layer count disagrees with config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise DimensionError(
                    f"rpe layer {i} shapes {w.shape}/{b.shape} do not match config widths"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"rpe layer {i} contains non-finite entries")


def init_rpe(config: RpeConfig, rng: np.random.Generator, dtype=np.float64) -> RpeNet:
    """Zero-mean uniform init scaled by 1/sqrt(fan_in) for weights and biases."""
    widths = config.layer_widths()
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=(fan_out,)).astype(dtype))
    return RpeNet(config=config, weights=weights, biases=biases)


def encode_input(k: int, mode: str, n: int) -> np.ndarray:
    """Feature vector for one relative offset.

    raw_integer -> [k]; normalized -> [k/n] (length-dependent by design,
    which makes it hostile to extrapolation); sincos -> interleaved
    sin/cos at 4 geometric frequencies 1/10000^(2i/8).
    """
    if mode not in INPUT_MODES:
        raise ConfigError(f"input_mode must be one of {INPUT_MODES}")
    if n < 1:
        raise OffsetRangeError(f"n must be >= 1, got {n}")
    if abs(k) >= n:
        raise OffsetRangeError(f"offset {k} out of range for n={n} (need |k| <= n-1)")
    return _encode_block(np.array([k], dtype=np.int64), mode, n)[0]


def _encode_block(offsets: np.ndarray, mode: str, n: int) -> np.ndarray:
    k = offsets.astype(np.float64)
    if mode == "raw_integer":
        return k[:, None]
    if mode == "normalized":
        return (k / float(n))[:, None]
    freqs = 1.0 / (10000.0 ** (2.0 * np.arange(SINCOS_PAIRS) / SINCOS_WIDTH))
    phase = k[:, None] * freqs[None, :]
    out = np.empty((k.shape[0], SINCOS_WIDTH), dtype=np.float64)
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


def _forward_rows(net: RpeNet, encoded: np.ndarray, keep_cache: bool):
    act = net.config.activation
    layers = net.config.layers
    rows = encoded.shape[0]
    dtype = net.weights[0].dtype
    current = encoded.astype(dtype)
    pre_acts = []
    acts = [current]
    for layer in range(layers):
        w, b = net.weights[layer], net.biases[layer]
        z = np.empty((rows, w.shape[1]), dtype=dtype)
        for i in range(rows):
            z[i] = np.dot(current[i], w)
        z += b
        if keep_cache:
            pre_acts.append(z)
        current = activations.apply(act, z) if layer < layers - 1 else z
        if keep_cache:
            acts.append(current)
    cache = {"pre_acts": pre_acts, "acts": acts} if keep_cache else None
    return current, cache


def rpe_forward(net: RpeNet, n: int, keep_cache: bool = False):
    """Evaluate the net at offsets -(n-1)..(n-1), one row per offset.

    Returns RelPosCoefficients, or (RelPosCoefficients, cache) when
    keep_cache is set; the cache feeds rpe_backward.
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    net.validate()
    offsets = np.arange(-(n - 1), n, dtype=np.int64)
    encoded = _encode_block(offsets, net.config.input_mode, n)
    values, cache = _forward_rows(net, encoded, keep_cache)
    coeffs = RelPosCoefficients(values)
    return (coeffs, cache) if keep_cache else coeffs


def rpe_backward(net: RpeNet, cache: dict, grad_coeffs: np.ndarray):
    """Reverse-mode gradients of all weights/biases given d loss / d table.

    Returns (weight_grads, bias_grads), lists aligned with net.weights and
    net.biases. The input encoding is a constant, so no input grad exists.
    """
    layers = net.config.layers
    acts, pre_acts = cache["acts"], cache["pre_acts"]
    if grad_coeffs.shape != acts[-1].shape:
        raise DimensionError(
            f"grad_coeffs shape {grad_coeffs.shape} != output shape {acts[-1].shape}"
        )
    act = net.config.activation
    weight_grads = [None] * layers
    bias_grads = [None] * layers
    grad_z = grad_coeffs.astype(net.weights[0].dtype, copy=True)
    for layer in range(layers - 1, -1, -1):
        if layer < layers - 1:
            grad_z = grad_z * activations.grad(act, pre_acts[layer])
        weight_grads[layer] = acts[layer].T @ grad_z
        bias_grads[layer] = grad_z.sum(axis=0)
        if layer > 0:
            grad_z = grad_z @ net.weights[layer].T
    return weight_grads, bias_grads


def num_params(config: RpeConfig) -> int:
    """Total scalar parameter count; a function of the config alone."""
    widths = config.layer_widths()
    return sum(wi * wo + wo for wi, wo in zip(widths[:-1], widths[1:]))
