"""Algorithm 2: regress the value net on the expectation-free Hamiltonian of the previous iterate.

``G`` is evaluated once per epoch with the previous weights frozen, so the
value step is plain least squares (no derivative of ``G`` w.r.t. the new
weights and no mark batches); the control step ascends ``G - V`` at one mark
per point.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .generator import g_tilde, g_value
from .network import Network, ParameterVector
from .optim import adam_step
from .sampling import Batch, derive_seed, sample_batch
from .trainer_residual import _boundary_sum, as_function, boundary_mean
from .training import (Clock, FreezeViolation, MetricsRow, MinibatchStream, Telemetry, TrainConfig, TrainResult,
                       chunks, epoch_rng, fresh_adam, initial_networks, maybe_checkpoint, net_eval, numeric,
                       parallel_value_and_grad)


def _one_mark(batch: Batch, problem):
    if not problem.has_jumps:
        return None
    if batch.z is None:
        raise ValueError("batch carries no marks; Algorithm 2 needs one mark per interior point")
    z = np.asarray(batch.z)
    if z.ndim == 3:
        if z.shape[1] != 1:
            raise ValueError("Algorithm 2 uses exactly one mark per interior point")
        z = z[:, 0, :]
    return z


def g_targets(theta_prev: ParameterVector, phi_prev: ParameterVector, batch: Batch, problem, chunk: int = 2048):
    """Regression targets ``G(t, x, z, theta_prev, phi_prev)`` as a numeric ``(M1, 1)`` array."""
    z = _one_mark(batch, problem)
    v, c = as_function(theta_prev), as_function(phi_prev)
    out = []
    for s in range(0, batch.M1, chunk):
        t, x = batch.t[s:s + chunk], batch.x[s:s + chunk]
        a = numeric(c(t, x))
        out.append(numeric(g_value(v, t, x, None if z is None else z[s:s + chunk], a, problem)))
    return np.concatenate(out, axis=0)


def _regression_sum(value, batch: Batch, targets):
    return ad.asum(ad.square(ad.sub(value(batch.t, batch.x), targets)))


def loss1_recursive(theta: ParameterVector, theta_prev: ParameterVector, phi_prev: ParameterVector,
                    batch: Batch, problem, xi: float = 1.0):
    """``(interior, boundary)``; the training objective is ``interior + xi * boundary``.

    ``G`` is computed from the frozen previous networks, so it is a constant
    for differentiation purposes.
    """
    G = g_targets(theta_prev, phi_prev, batch, problem)
    interior = float(numeric(_regression_sum(as_function(theta), batch, G))) / batch.M1
    return interior, boundary_mean(theta, batch, problem)


def _loss2_sum(value, control, batch: Batch, problem):
    a = control(batch.t, batch.x)
    gt = g_tilde(value, batch.t, batch.x, _one_mark(batch, problem), a, problem)
    return ad.mul(-problem.sign, ad.asum(gt))


def loss2_recursive(phi: ParameterVector, theta_new: ParameterVector, batch: Batch, problem) -> float:
    """``-sign * mean (G - V)`` at one mark per point, ``theta_new`` frozen."""
    return float(numeric(_loss2_sum(as_function(theta_new), as_function(phi), batch, problem))) / batch.M1


def value_step_terms(batch: Batch, targets, problem, xi: float, workers: int = 1):
    M1 = batch.M1
    terms = [(lambda idx: (lambda net: ad.div(_regression_sum(net, batch.interior_slice(idx), targets[idx]), M1)))(idx)
             for idx in chunks(np.arange(M1), workers)]
    if batch.M2:
        terms.append(lambda net: ad.mul(xi / batch.M2, _boundary_sum(net, batch, problem)))
    return terms


def control_step_terms(theta, batch: Batch, problem, workers: int = 1):
    value = as_function(theta)
    M1 = batch.M1
    return [(lambda idx: (lambda net: ad.div(_loss2_sum(value, net, batch.interior_slice(idx), problem), M1)))(idx)
            for idx in chunks(np.arange(M1), workers)]


def train_gpi_pinn2(problem, config: TrainConfig, reference=None, init=None, out_dir=None, on_epoch=None) -> TrainResult:
    """Per epoch: resample, freeze ``(theta_prev, phi_prev)``, ``N1`` regression steps, ``N2`` control steps.

    Stops when ``max |V_new - V_prev|`` over the epoch's interior batch is
    ``<= eps`` or after ``k_max`` epochs.
    """
    cfg = config
    theta, phi = init if init is not None else initial_networks(problem, cfg)
    result = TrainResult(theta, phi, [], algorithm=2)
    if cfg.k_max == 0:
        return result
    adam1, adam2 = fresh_adam(theta), fresh_adam(phi)
    telemetry = Telemetry(problem, cfg, reference)
    clock = Clock(cfg.record_time)
    n_bnd = cfg.minibatch_size if cfg.M2 else 0
    for k in range(1, cfg.k_max + 1):
        pool = sample_batch(problem, cfg.M1, cfg.M2, derive_seed(cfg.seed, "epoch", k, "pool"),
                            marks_per_point=1 if problem.has_jumps else 0)
        theta_prev, phi_prev = theta, phi
        targets = g_targets(theta_prev, phi_prev, pool, problem)
        v_prev = net_eval(theta_prev, pool.t, pool.x)
        s_int = MinibatchStream(cfg.M1, cfg.minibatch_size, epoch_rng(cfg, k, "interior"))
        s_bnd = MinibatchStream(cfg.M2, n_bnd, epoch_rng(cfg, k, "terminal"))
        li, lb, l2 = [], [], []
        frozen = phi.checksum()
        for _ in range(cfg.N1):
            idx = s_int.next()
            mb = pool.interior_slice(idx).terminal_slice(s_bnd.next())
            vals, g = parallel_value_and_grad(theta, value_step_terms(mb, targets[idx], problem, cfg.xi, cfg.workers),
                                              cfg.workers)
            n_int = len(vals) - (1 if mb.M2 else 0)
            li.append(sum(vals[:n_int]))
            lb.append(boundary_mean(theta, mb, problem))
            theta, adam1 = adam_step(adam1, theta, g, cfg.eta1)
        if phi.checksum() != frozen:
            raise FreezeViolation("control parameters changed during the value step")
        frozen = theta.checksum()
        for _ in range(cfg.N2):
            mb = pool.interior_slice(s_int.next())
            vals, g = parallel_value_and_grad(phi, control_step_terms(theta, mb, problem, cfg.workers), cfg.workers)
            l2.append(sum(vals))
            phi, adam2 = adam_step(adam2, phi, g, cfg.eta2)
        if theta.checksum() != frozen:
            raise FreezeViolation("value parameters changed during the control step")
        sup = float(np.max(np.abs(net_eval(theta, pool.t, pool.x) - v_prev)))
        mv, ma = telemetry.mae(theta, phi)
        row = MetricsRow(k, float(np.mean(li)), float(np.mean(lb)), float(np.mean(l2)), sup, mv, ma, clock.elapsed())
        result.metrics.append(row)
        result.theta, result.phi = theta, phi
        maybe_checkpoint(cfg, out_dir, k, theta, phi)
        if on_epoch is not None:
            on_epoch(row, theta, phi)
        if not np.isfinite(row.loss1_interior) or not np.isfinite(row.loss2):
            raise FloatingPointError(f"non-finite loss at epoch {k}: {row}")
        if sup <= cfg.eps:
            result.stopped_early = True
            break
    return result
