"""Hamiltonian evaluations through second-order jets.

``v`` is any callable ``v(t, x) -> (B, 1)`` written with
:mod:`gpipinn.autodiff` functions (a network or an exact function); ``a`` is
the ``(B, m)`` action (array or tape variable).  Drift-diffusion terms are
never formed from explicit gradients or Hessians of ``v``: they are the second
jet coefficient of the curve

    h -> sum_i v(t + h^2/(2k), x + h sigma_i / sqrt(2) + h^2 beta / (2k))

at ``h = 0``.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Jet2


def _batch_size(x) -> int:
    return int(np.shape(ad.value_of(x))[0])


def _full_column(c, B, d):
    """Diffusion column as a ``(B, d)`` operand (constants are broadcast)."""
    if isinstance(c, ad.Var):
        return c if c.shape == (B, d) else ad.add(c, np.zeros((B, d)))
    return np.broadcast_to(np.asarray(c, dtype=float), (B, d))


def psi_jet(v, t, x, a, spec):
    """Jet of the curve at ``h=0``; returns ``(psi''(0), v(t, x))``.

    All k curves are pushed through ``v`` in one stacked batch.
    """
    B = _batch_size(x)
    d, k = spec.d, spec.k
    t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (B, 1))
    beta = spec.drift(t, x, a)
    cols = spec.diffusion(t, x, a)
    if len(cols) != k:
        raise ValueError(f"diffusion returned {len(cols)} columns, expected k={k}")
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    d1 = ad.concat([ad.mul(_full_column(c, B, d), inv_sqrt2) for c in cols], axis=0) if k > 1 \
        else ad.mul(_full_column(cols[0], B, d), inv_sqrt2)
    beta_k = ad.div(_full_column(beta, B, d), float(k))
    d2 = ad.concat([beta_k] * k, axis=0) if k > 1 else beta_k
    t_rep = np.tile(t, (k, 1))
    x_rep = np.tile(np.asarray(x, dtype=float), (k, 1))
    t_jet = Jet2(t_rep, 0.0, np.full((k * B, 1), 1.0 / k))
    x_jet = Jet2(x_rep, d1, d2)
    out = v(t_jet, x_jet)
    if not isinstance(out, Jet2):  # v ignores its inputs
        const = np.broadcast_to(np.asarray(ad.value_of(out), dtype=float), (k * B, 1))
        return np.zeros((B, 1)), const[:B]
    psi2 = out.d2
    if ad._zero(psi2):
        psi2 = np.zeros((k * B, 1))
    psi2 = ad.asum(ad.reshape(psi2, (k, B, 1)), axis=0) if k > 1 else psi2
    val = out.val[:B] if k > 1 else out.val
    return psi2, val


def psi_second(v, t, x, a, spec):
    """``psi''(0) = d_t v + beta . grad v + 1/2 Tr(sigma sigma^T Hess v)`` per point, ``(B, 1)``."""
    return psi_jet(v, t, x, a, spec)[0]


def _jump_values(v, t, x, z, a, spec):
    """``v(t, x + gamma(t, x, z_j, a))`` for marks ``z`` of shape ``(B, M3, l)``; returns ``(B, M3)``."""
    B, M3, l = z.shape
    rows = np.repeat(np.arange(B), M3)
    t_rep = np.asarray(t, dtype=float).reshape(-1, 1)[rows]
    x_rep = np.asarray(x, dtype=float)[rows]
    a_rep = a[rows] if isinstance(a, ad.Var) else np.asarray(a)[rows]
    jump = spec.jump(t_rep, x_rep, z.reshape(B * M3, l), a_rep)
    vals = v(t_rep, ad.add(x_rep, jump))
    return ad.reshape(vals, (B, M3))


def _marks_per_point(z, B):
    z = np.asarray(z, dtype=float)
    if z.ndim == 2:  # shared (M3, l) list of marks
        return np.broadcast_to(z, (B,) + z.shape)
    if z.ndim == 3 and z.shape[0] == B:
        return z
    raise ValueError(f"marks must have shape (M3, l) or (B, M3, l), got {z.shape}")


def extended_hamiltonian_mc(v, t, x, a, marks, spec):
    """Monte Carlo extended Hamiltonian: mark-average of ``g_tilde``, ``(B, 1)``."""
    B = _batch_size(x)
    psi2, v0 = psi_jet(v, t, x, a, spec)
    t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (B, 1))
    out = ad.add(psi2, spec.running_reward(t, x, a))
    if not spec.has_jumps:
        return out
    if marks is None or np.size(marks) == 0:
        raise ValueError("extended_hamiltonian_mc needs a non-empty set of marks")
    z = _marks_per_point(marks, B)
    vj = _jump_values(v, t, x, z, a, spec)
    mean_jump = ad.sub(ad.mean(vj, axis=1, keepdims=True), v0)
    return ad.add(out, ad.mul(spec.intensity(t, x, a), mean_jump))


def g_tilde(v, t, x, z, a, spec):
    """Expectation-free extended Hamiltonian at one mark per point, ``(B, 1)``."""
    return _g_parts(v, t, x, z, a, spec)[0]


def g_value(v, t, x, z, a, spec):
    """Expectation-free Hamiltonian ``G = v + g_tilde``, ``(B, 1)``."""
    gt, v0 = _g_parts(v, t, x, z, a, spec)
    return ad.add(v0, gt)


def _g_parts(v, t, x, z, a, spec):
    B = _batch_size(x)
    psi2, v0 = psi_jet(v, t, x, a, spec)
    t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (B, 1))
    out = ad.add(psi2, spec.running_reward(t, x, a))
    if spec.has_jumps:
        if z is None:
            raise ValueError("a mark per point is required when the problem has jumps")
        z = np.asarray(z, dtype=float).reshape(B, 1, spec.l)
        vj = _jump_values(v, t, x, z, a, spec)
        out = ad.add(out, ad.mul(spec.intensity(t, x, a), ad.sub(vj, v0)))
    return out, v0
