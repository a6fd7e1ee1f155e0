"""Elementwise activations and their derivatives, shared by the encoder MLP
and the gated blocks. Everything is expressed in terms of the pre-activation
z so backward passes can reuse cached forward buffers."""

import numpy as np

NAMES = ("relu", "silu", "sigmoid", "identity")


def apply(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}, expected one of {NAMES}")


def grad(name: str, z: np.ndarray) -> np.ndarray:
    """d apply(z) / dz."""
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 + z * (1.0 - s))
    if name == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}, expected one of {NAMES}")
