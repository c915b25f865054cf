"""Algorithm 1: PDE-residual value update alternating with Hamiltonian ascent on the control.

The value loss squares the Monte Carlo extended Hamiltonian, so its gradient
differentiates through the second-order jet (a third-order path); this is
handled by recording the jet coefficients on the tape.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .generator import extended_hamiltonian_mc
from .network import Network, ParameterVector
from .sampling import Batch, derive_seed, sample_batch
from .training import (Clock, MetricsRow, MinibatchStream, Telemetry, TrainConfig, TrainResult, chunks, epoch_rng,
                       fresh_adam, initial_networks, maybe_checkpoint, net_eval, numeric, parallel_value_and_grad,
                       validation_points, FreezeViolation)
from .optim import adam_step


def as_function(net):
    """A ``ParameterVector`` becomes a numeric network; callables (e.g. exact solutions) pass through."""
    return Network(net) if isinstance(net, ParameterVector) else net


def _marks(batch: Batch, problem):
    if not problem.has_jumps:
        return None
    if batch.z is None:
        raise ValueError("batch carries no marks; sample it with marks_per_point >= 1")
    z = np.asarray(batch.z)
    return z.reshape(z.shape[0], 1, problem.l) if z.ndim == 2 else z


def hamiltonian_hat(value, control, batch: Batch, problem):
    """``H_hat`` per interior point, ``(M1, 1)``; ``value``/``control`` are callables."""
    a = control(batch.t, batch.x)
    return extended_hamiltonian_mc(value, batch.t, batch.x, a, _marks(batch, problem), problem)


def _boundary_sum(value, batch: Batch, problem):
    if batch.M2 == 0:
        return 0.0
    xt = batch.terminal
    tT = np.full((xt.shape[0], 1), problem.T)
    diff = ad.sub(value(tT, xt), problem.terminal_reward(xt))
    return ad.asum(ad.square(diff))


def _interior_sum(value, control, batch: Batch, problem):
    return ad.asum(ad.square(hamiltonian_hat(value, control, batch, problem)))


def boundary_mean(theta: ParameterVector, batch: Batch, problem) -> float:
    """Unweighted terminal loss ``mean (V(T, x~) - F(x~))^2`` (0 when ``M2 = 0``)."""
    if batch.M2 == 0:
        return 0.0
    return float(numeric(_boundary_sum(as_function(theta), batch, problem))) / batch.M2


def loss1_residual(theta: ParameterVector, phi: ParameterVector, batch: Batch, problem):
    """``(mean H_hat^2, mean (V(T, x~) - F(x~))^2)``; the boundary term is 0 when ``M2 = 0``."""
    v, c = as_function(theta), as_function(phi)
    interior = float(numeric(_interior_sum(v, c, batch, problem))) / batch.M1
    return interior, boundary_mean(theta, batch, problem)


def _loss2_sum(value, control, batch: Batch, problem):
    return ad.mul(-problem.sign, ad.asum(hamiltonian_hat(value, control, batch, problem)))


def loss2_residual(theta: ParameterVector, phi: ParameterVector, batch: Batch, problem) -> float:
    """``-sign * mean H_hat``: descent improves the problem's objective for either sense."""
    return float(numeric(_loss2_sum(as_function(theta), as_function(phi), batch, problem))) / batch.M1


def _numeric_control(phi):
    if isinstance(phi, ParameterVector):
        return lambda t, x: net_eval(phi, t, x)
    return lambda t, x: numeric(phi(t, x))


def value_step_terms(phi, batch: Batch, problem, xi: float, workers: int = 1):
    """Loss terms (callables of the value net) for one Step-1 update."""
    ctrl = _numeric_control(phi)
    M1 = batch.M1
    terms = [(lambda idx: (lambda net: ad.div(_interior_sum(net, ctrl, batch.interior_slice(idx), problem), M1)))(idx)
             for idx in chunks(np.arange(M1), workers)]
    if batch.M2:
        terms.append(lambda net: ad.mul(xi / batch.M2, _boundary_sum(net, batch, problem)))
    return terms


def control_step_terms(theta, batch: Batch, problem, workers: int = 1):
    value = as_function(theta)
    M1 = batch.M1
    return [(lambda idx: (lambda net: ad.div(_loss2_sum(value, net, batch.interior_slice(idx), problem), M1)))(idx)
            for idx in chunks(np.arange(M1), workers)]


def train_gpi_pinn1(problem, config: TrainConfig, reference=None, init=None, out_dir=None, on_epoch=None) -> TrainResult:
    """Alternate ``N1`` value steps on the squared residual and ``N2`` control steps on ``-sign * H_hat``.

    Stops once the sup-change of ``V`` between epochs on a fixed validation
    lattice is ``<= eps`` or after ``k_max`` epochs.
    """
    cfg = config
    theta, phi = init if init is not None else initial_networks(problem, cfg)
    result = TrainResult(theta, phi, [], algorithm=1)
    if cfg.k_max == 0:
        return result
    adam1, adam2 = fresh_adam(theta), fresh_adam(phi)
    val = validation_points(problem, cfg)
    v_old = net_eval(theta, val.t, val.x)
    telemetry = Telemetry(problem, cfg, reference)
    clock = Clock(cfg.record_time)
    n_bnd = cfg.minibatch_size if cfg.M2 else 0
    for k in range(1, cfg.k_max + 1):
        pool = sample_batch(problem, cfg.M1, cfg.M2, derive_seed(cfg.seed, "epoch", k, "pool"),
                            marks_per_point=cfg.M3 if problem.has_jumps else 0)
        s_int = MinibatchStream(cfg.M1, cfg.minibatch_size, epoch_rng(cfg, k, "interior"))
        s_bnd = MinibatchStream(cfg.M2, n_bnd, epoch_rng(cfg, k, "terminal"))
        li, lb, l2 = [], [], []
        frozen = phi.checksum()
        for _ in range(cfg.N1):
            mb = pool.interior_slice(s_int.next()).terminal_slice(s_bnd.next())
            vals, g = parallel_value_and_grad(theta, value_step_terms(phi, mb, problem, cfg.xi, cfg.workers), cfg.workers)
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
        v_new = net_eval(theta, val.t, val.x)
        sup = float(np.max(np.abs(v_new - v_old)))
        v_old = v_new
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
