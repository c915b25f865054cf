"""Adam with a constant learning rate."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import ParameterVector


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **kw)


def adam_step(state: AdamState, params: ParameterVector, grad, lr: float,
              clip_norm: float | None = None) -> tuple[ParameterVector, AdamState]:
    """One bias-corrected Adam update; returns new params and state.

    ``clip_norm`` rescales the gradient to at most that Euclidean norm (off by
    default).
    """
    g = np.asarray(grad, dtype=float)
    if g.shape != state.m.shape or g.shape != params.values.shape:
        raise ValueError("gradient, moments and parameters must have equal length")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise FloatingPointError(f"non-finite gradient component at index {bad}")
    if clip_norm is not None:
        norm = float(np.linalg.norm(g))
        if norm > clip_norm:
            g = g * (clip_norm / norm)
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.replace(new_values), replace(state, m=m, v=v, step=step)
