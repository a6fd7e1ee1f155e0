"""Position-wise normalization layers with hand-derived backward passes.

Both operate over the last axis. layernorm centers and scales with a
learnable gain and bias; rmsnorm only rescales with a gain. eps sits inside
the square root in both cases.
"""

import numpy as np

NORMS = ("layernorm", "rmsnorm")
EPS = 1e-5


def layernorm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + EPS)
    xhat = centered * inv_std
    y = xhat * gain + bias
    return y, {"xhat": xhat, "inv_std": inv_std, "gain": gain}


def layernorm_backward(cache: dict, grad_y: np.ndarray):
    xhat, inv_std, gain = cache["xhat"], cache["inv_std"], cache["gain"]
    gscaled = grad_y * gain
    mean_g = gscaled.mean(axis=-1, keepdims=True)
    mean_gx = (gscaled * xhat).mean(axis=-1, keepdims=True)
    grad_x = inv_std * (gscaled - mean_g - xhat * mean_gx)
    axes = tuple(range(grad_y.ndim - 1))
    grad_gain = (grad_y * xhat).sum(axis=axes)
    grad_bias = grad_y.sum(axis=axes)
    return grad_x, grad_gain, grad_bias


def rmsnorm_forward(x: np.ndarray, gain: np.ndarray):
    ms = np.mean(x * x, axis=-1, keepdims=True)
    inv_rms = 1.0 / np.sqrt(ms + EPS)
    y = x * inv_rms * gain
    return y, {"x": x, "inv_rms": inv_rms, "gain": gain}


def rmsnorm_backward(cache: dict, grad_y: np.ndarray):
    x, inv_rms, gain = cache["x"], cache["inv_rms"], cache["gain"]
    d = x.shape[-1]
    gscaled = grad_y * gain
    dot = (gscaled * x).sum(axis=-1, keepdims=True)
    grad_x = inv_rms * gscaled - x * (inv_rms**3 * dot / d)
    axes = tuple(range(grad_y.ndim - 1))
    grad_gain = (grad_y * x * inv_rms).sum(axis=axes)
    return grad_x, grad_gain
