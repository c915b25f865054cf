"""Pieces shared by both GPI-PINN trainers: configuration, telemetry, gradient plumbing."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .evaluation import TestPoints, lattice_grid, make_test_grid, mae_control, mae_value, mean_abs
from .network import Network, NetworkArch, ParameterVector, init_params, save_checkpoint
from .optim import AdamState, adam_step
from .sampling import derive_seed, rng_for

METRIC_COLUMNS = ("epoch", "loss1_interior", "loss1_boundary", "loss2", "sup_change", "mae_v", "mae_a", "seconds")


@dataclass
class TrainConfig:
    """Batch sizes, step counts and learning rates of one training run.

    ``xi`` weighs the terminal term of the value loss.  ``val_per_axis`` sets
    the lattice on which Algorithm 1's stopping rule measures the sup-change
    of ``V``.  ``record_time=False`` logs ``seconds = 0`` so metrics files are
    bitwise reproducible.
    """

    M1: int = 4096
    M2: int = 4096
    M3: int = 64
    N1: int = 16
    N2: int = 16
    eta1: float = 1e-3
    eta2: float = 1e-3
    eps: float = 1e-4
    k_max: int = 100
    xi: float = 1.0
    minibatch_size: int = 512
    seed: int = 0
    net_kind: str = "dgm"
    L: int = 2
    N: int = 32
    test_size: int = 4096
    val_per_axis: int = 32
    val_max_points: int = 32768
    workers: int = 1
    checkpoint_every: int = 0
    record_time: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("M1", "M3", "N1", "N2", "minibatch_size", "L", "N", "test_size", "val_per_axis", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.M2 < 0 or self.k_max < 0 or self.checkpoint_every < 0:
            raise ValueError("M2, k_max and checkpoint_every must be >= 0")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("learning rates eta1, eta2 must be positive")
        if self.eps <= 0:
            raise ValueError("stopping tolerance eps must be positive")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if self.net_kind not in ("dgm", "feedforward"):
            raise ValueError(f"unknown network kind {self.net_kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class MetricsRow:
    epoch: int
    loss1_interior: float
    loss1_boundary: float
    loss2: float
    sup_change: float
    mae_v: float | None = None
    mae_a: float | None = None
    seconds: float = 0.0

    def as_list(self):
        return [getattr(self, c) for c in METRIC_COLUMNS]


@dataclass
class TrainResult:
    theta: ParameterVector
    phi: ParameterVector
    metrics: list = field(default_factory=list)
    stopped_early: bool = False
    algorithm: int = 0


class FreezeViolation(AssertionError):
    """A network that should have been frozen during a step changed."""


def default_archs(problem, cfg: TrainConfig) -> tuple[NetworkArch, NetworkArch]:
    """Value and control architectures with a fixed affine input normalisation onto the test box."""
    box = np.asarray(problem.test_box, dtype=float)
    shift = tuple(0.5 * (box[:, 0] + box[:, 1]))
    scale = tuple(0.5 * (box[:, 1] - box[:, 0]))
    out = "sigmoid" if problem.action_set == "unit_box" else "linear"
    common = dict(kind=cfg.net_kind, input_dim=1 + problem.d, L=cfg.L, N=cfg.N, input_shift=shift, input_scale=scale)
    return (NetworkArch(output_dim=1, output_activation="linear", **common),
            NetworkArch(output_dim=problem.m, output_activation=out, **common))


def initial_networks(problem, cfg: TrainConfig):
    va, ca = default_archs(problem, cfg)
    return init_params(va, derive_seed(cfg.seed, "init", "value")), init_params(ca, derive_seed(cfg.seed, "init", "control"))


def numeric(out) -> np.ndarray:
    return np.asarray(ad.value_of(out), dtype=float)


def net_eval(params: ParameterVector, t, x, chunk: int = 8192) -> np.ndarray:
    """Numeric forward pass in chunks."""
    outs = [numeric(Network(params)(t[s:s + chunk], x[s:s + chunk])) for s in range(0, t.shape[0], chunk)]
    return np.concatenate(outs, axis=0)


def value_and_grad(params: ParameterVector, terms) -> tuple[list, np.ndarray]:
    """Evaluate scalar loss terms of one network and the gradient of their sum.

    ``terms`` is a list of callables ``net -> scalar``; each gets its own tape
    (so they may run on separate workers) and results are reduced in list
    order.
    """
    vals, grad = [], np.zeros_like(params.values)
    for fn in terms:
        v, g = _single_term(params, fn)
        vals.append(v)
        grad = grad + g
    return vals, grad


def _single_term(params: ParameterVector, fn):
    tape = ad.Tape()
    flat = tape.leaf(params.values.copy())
    out = fn(Network(params, flat))
    if not isinstance(out, ad.Var):
        return float(np.asarray(ad.value_of(out))), np.zeros_like(params.values)
    return float(out.value), tape.gradient(out, [flat])[0]


def parallel_value_and_grad(params: ParameterVector, terms, workers: int = 1):
    """As :func:`value_and_grad` but fans the terms out over a thread pool."""
    if workers <= 1 or len(terms) <= 1:
        return value_and_grad(params, terms)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda fn: _single_term(params, fn), terms))
    vals = [r[0] for r in results]
    grad = np.zeros_like(params.values)
    for _, g in results:
        grad = grad + g
    return vals, grad


def chunks(idx: np.ndarray, workers: int):
    """Split minibatch indices into ``workers`` contiguous pieces (one piece in serial mode)."""
    if workers <= 1:
        return [idx]
    return [c for c in np.array_split(idx, workers) if c.size]


class MinibatchStream:
    """Consecutive slices of fresh permutations of ``range(n)``."""

    def __init__(self, n: int, size: int, rng: np.random.Generator):
        self.n, self.size, self.rng = n, min(size, n), rng
        self.perm = rng.permutation(n) if n else np.empty(0, dtype=int)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.n == 0:
            return np.empty(0, dtype=int)
        if self.pos + self.size > self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        out = self.perm[self.pos:self.pos + self.size]
        self.pos += self.size
        return out


def validation_points(problem, cfg: TrainConfig) -> TestPoints:
    """Fixed lattice for the sup-change stopping rule; random box points if the lattice is too large."""
    if cfg.val_per_axis ** (problem.d + 1) <= cfg.val_max_points:
        return lattice_grid(problem, cfg.val_per_axis)
    return make_test_grid(problem, min(cfg.val_max_points, 4096), derive_seed(cfg.seed, "validation"))


class Telemetry:
    """Test-set MAE against an optional reference solution."""

    def __init__(self, problem, cfg: TrainConfig, reference=None):
        self.reference = reference
        self.points = make_test_grid(problem, cfg.test_size, derive_seed(cfg.seed, "test")) if reference is not None else None

    def mae(self, theta, phi):
        if self.reference is None:
            return None, None
        mv = mae_value(lambda t, x: net_eval(theta, t, x), self.reference.value, self.points)
        ma = mae_control(lambda t, x: net_eval(phi, t, x), self.reference.control, self.points)
        return mv, ma


def relative_errors(theta, phi, reference, points: TestPoints) -> tuple[float, float]:
    """``MAE_V / mean|V|`` and ``MAE_a / mean|a*|``."""
    mv = mae_value(lambda t, x: net_eval(theta, t, x), reference.value, points)
    ma = mae_control(lambda t, x: net_eval(phi, t, x), reference.control, points)
    return mv / mean_abs(reference.value, points), ma / mean_abs(reference.control, points)


def adam_update(params, state, grad, lr):
    return adam_step(state, params, grad, lr)


def maybe_checkpoint(cfg: TrainConfig, out_dir, epoch: int, theta, phi):
    if out_dir is None or cfg.checkpoint_every <= 0 or epoch % cfg.checkpoint_every:
        return
    save_checkpoint(theta, f"{out_dir}/value_epoch{epoch}.ckpt")
    save_checkpoint(phi, f"{out_dir}/control_epoch{epoch}.ckpt")


class Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start if self.enabled else 0.0


def fresh_adam(params: ParameterVector) -> AdamState:
    return AdamState.zeros(len(params))


def epoch_rng(cfg: TrainConfig, epoch: int, purpose: str):
    return rng_for(cfg.seed, "epoch", epoch, purpose)
