"""Adam with warmup + inverse-sqrt schedule and decoupled weight decay.

Decay touches only matrix-shaped parameters (ndim >= 2); gains, biases,
and the scalar decay rate are exempt. All updates are in place so every
view of a parameter (operator nets, tied heads) stays current.
"""

import math
from dataclasses import dataclass

import numpy as np

from tnn.errors import ConfigError, NumericError


@dataclass(frozen=True)
class OptimConfig:
    peak_lr: float = 3e-3
    warmup_steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 0.0  # 0 disables clipping

    def __post_init__(self):
        if self.peak_lr < 0 or self.eps <= 0:
            raise ConfigError("peak_lr must be >= 0 and eps > 0")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.clip_norm < 0:
            raise ConfigError("weight_decay and clip_norm must be >= 0")


class AdamState:
    def __init__(self, params: dict):
        self.step = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}


def lr_at(config: OptimConfig, step: int) -> float:
    """peak * min(step/warmup, sqrt(warmup/step)); peaks exactly at warmup."""
    if step < 1:
        raise ConfigError("schedule is defined for step >= 1")
    w = config.warmup_steps
    return config.peak_lr * min(step / w, math.sqrt(w / step))


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return math.sqrt(total)


def apply_update(model, state: AdamState, grads: dict, config: OptimConfig) -> dict:
    """One optimizer step over the model's flat parameter dict, in place."""
    if set(grads) != set(model.params):
        missing = set(model.params) - set(grads)
        extra = set(grads) - set(model.params)
        raise ConfigError(f"gradient keys mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    state.step += 1
    lr = lr_at(config, state.step)
    norm = global_grad_norm(grads)
    if not math.isfinite(norm):
        raise NumericError(f"non-finite gradient norm at step {state.step}")
    scale = 1.0
    if config.clip_norm > 0.0 and norm > config.clip_norm:
        scale = config.clip_norm / norm
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for name, p in model.params.items():
        g = grads[name].astype(p.dtype, copy=False)
        if scale != 1.0:
            g = g * scale
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bias1) / (np.sqrt(v / bias2) + config.eps)
        if config.weight_decay > 0.0 and p.ndim >= 2:
            update = update + config.weight_decay * p
        p -= lr * update
    model.bump_versions()
    return {"lr": lr, "grad_norm": norm}


def train_step(model, state: AdamState, batch: np.ndarray, config: OptimConfig) -> dict:
    """loss_and_grads + apply_update; raises NumericError on a non-finite loss.

    Overflow is detected by explicit finiteness checks, so numpy's warning
    machinery is silenced for the duration of the step; a diverging run
    aborts with a clean NumericError instead of a warning cascade.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        loss, grads = model.loss_and_grads(batch)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss at step {state.step + 1}: {loss}")
        metrics = apply_update(model, state, grads, config)
    metrics["loss"] = loss
    return metrics
