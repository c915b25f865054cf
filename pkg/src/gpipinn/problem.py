"""Controlled jump-diffusion problems.

Batch conventions used by every callback: ``t`` is ``(B, 1)``, ``x`` is
``(B, d)``, ``a`` is ``(B, m)`` and a mark ``z`` is ``(B, l)``.  Scalar
outputs (intensity, rewards) are ``(B, 1)`` columns.  Callbacks are written
with :mod:`gpipinn.autodiff` functions so ``a`` (and ``x`` for the network
side) may be tape variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .sampling import Measure


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int
    k: int
    l: int
    m: int
    T: float
    drift: Callable
    diffusion: Callable  # (t, x, a) -> list of k columns, each (B, d)
    jump: Callable
    intensity: Callable
    running_reward: Callable
    terminal_reward: Callable
    mark_sampler: Callable  # (rng, count) -> (count, l)
    sense: str = "maximize"
    action_set: str = "real"  # "real" (R^m) or "unit_box" ((0,1)^m)
    has_jumps: bool = True
    interior_measure: Measure | None = None
    terminal_measure: Measure | None = None
    test_box: tuple = ()  # ((t_lo, t_hi), (x1_lo, x1_hi), ...)
    state_lower: float | None = None  # strict lower bound on every state coordinate, if any
    config: object = None

    def __post_init__(self):
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"sense must be 'maximize' or 'minimize', got {self.sense!r}")
        if self.action_set not in ("real", "unit_box"):
            raise ValueError(f"unknown action set {self.action_set!r}")

    @property
    def sign(self) -> float:
        """+1 for maximisation, -1 for minimisation."""
        return 1.0 if self.sense == "maximize" else -1.0


def sample_jump(spec: ProblemSpec, count: int, seed) -> np.ndarray:
    """``count`` i.i.d. marks from the problem's jump law, shape ``(count, l)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = np.asarray(spec.mark_sampler(rng, count), dtype=float).reshape(count, spec.l)
    if np.all(z == 0.0):
        raise ValueError("mark law is degenerate at 0, which is excluded from the mark space")
    return z


def _column(value, like):
    """Constant ``(B, 1)`` column matching the batch size of ``like``."""
    n = np.shape(ad.value_of(like))[0]
    return np.full((n, 1), float(value))


# ---------------------------------------------------------------------------
# Linear-quadratic regulator with jumps of controlled intensity


@dataclass
class LqrConfig:
    d: int = 1
    T: float = 1.0
    c1: float = 1.0
    c2: float = 0.25
    Sigma: np.ndarray | None = None
    Sigma_J: np.ndarray | None = None
    Lambda1: float = 0.0
    Lambda2: float = 0.0
    matrix_seed: int = 0
    # > 0 trains on t ~ U[0,T], x ~ U[-w, w]^d instead of the sqrt(t)-Gaussian measure
    train_half_width: float = 0.0

    def __post_init__(self):
        rng = np.random.default_rng(self.matrix_seed)
        if self.Sigma is None:
            self.Sigma = rng.uniform(0.0, 1.0, size=(self.d, self.d))
        if self.Sigma_J is None:
            B = rng.uniform(0.0, 1.0, size=(self.d, self.d))
            self.Sigma_J = B @ B.T
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        self.Sigma_J = np.atleast_2d(np.asarray(self.Sigma_J, dtype=float))
        if self.Sigma.shape != (self.d, self.d) or self.Sigma_J.shape != (self.d, self.d):
            raise ValueError("Sigma and Sigma_J must be d x d")
        if not np.allclose(self.Sigma_J, self.Sigma_J.T):
            raise ValueError("Sigma_J must be symmetric")
        if np.linalg.eigvalsh(self.Sigma_J).min() < -1e-12:
            raise ValueError("Sigma_J must be positive semidefinite")
        if self.Lambda1 < 0 or self.Lambda2 < 0:
            raise ValueError("intensity coefficients Lambda1, Lambda2 must be >= 0")
        if self.c1 <= 0 or self.T <= 0:
            raise ValueError("c1 and T must be positive")
        if self.train_half_width < 0:
            raise ValueError("train_half_width must be >= 0")

    @property
    def zeta(self) -> float:
        """E||Z||^2 = trace(Sigma_J) for Z ~ N(0, Sigma_J)."""
        return float(np.trace(self.Sigma_J))

    def jump_factor(self) -> np.ndarray:
        """Matrix ``B`` with ``B B^T = Sigma_J`` (symmetric square root)."""
        w, Q = np.linalg.eigh(self.Sigma_J)
        return Q @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def lqr_problem(cfg: LqrConfig) -> ProblemSpec:
    """Minimise E[int c1|a|^2 dt + c2|X_T|^2] with dX = a dt + Sigma dW + dJ."""
    if cfg.Lambda1 < 0 or cfg.Lambda2 < 0:
        raise ValueError("intensity coefficients must be >= 0")
    d = cfg.d
    Sigma = cfg.Sigma
    columns = [Sigma[:, i] for i in range(d)]
    Bj = cfg.jump_factor()

    def drift(t, x, a):
        return a

    def diffusion(t, x, a):
        return columns

    def jump(t, x, z, a):
        return z

    def intensity(t, x, a):
        if cfg.Lambda2 == 0.0:
            return _column(cfg.Lambda1, x)
        return ad.add(cfg.Lambda1, ad.mul(cfg.Lambda2, ad.asum(ad.square(a), axis=1, keepdims=True)))

    def running_reward(t, x, a):
        return ad.mul(cfg.c1, ad.asum(ad.square(a), axis=1, keepdims=True))

    def terminal_reward(x):
        return ad.mul(cfg.c2, ad.asum(ad.square(x), axis=1, keepdims=True))

    def marks(rng, count):
        return rng.standard_normal((count, d)) @ Bj.T

    has_jumps = (cfg.Lambda1 > 0 or cfg.Lambda2 > 0) and cfg.zeta > 0
    if cfg.train_half_width > 0:
        box = Measure("uniform_box", T=cfg.T, d=d, box=((-cfg.train_half_width, cfg.train_half_width),) * d)
        interior, terminal = box, box
    else:
        interior = Measure("gaussian_sqrt_t", T=cfg.T, d=d)
        terminal = Measure("gaussian_sqrt_T", T=cfg.T, d=d)
    return ProblemSpec(
        name="lqr", d=d, k=d, l=d, m=d, T=cfg.T,
        drift=drift, diffusion=diffusion, jump=jump, intensity=intensity,
        running_reward=running_reward, terminal_reward=terminal_reward,
        mark_sampler=marks, sense="minimize", action_set="real", has_jumps=has_jumps,
        interior_measure=interior, terminal_measure=terminal,
        test_box=((0.0, cfg.T),) + ((-2.5, 2.5),) * d,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Consumption-investment with constant coefficients


@dataclass
class ConsumptionConfig:
    n: int = 1
    T: float = 1.0
    r: float = 0.02
    rho: float = 0.045
    gamma_crra: float = 0.3
    mu: np.ndarray | None = None
    corr: float = 0.2
    Sigma: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu_Z: np.ndarray | None = None
    sigma_Z: np.ndarray | None = None
    y_b: float = 150.0

    def __post_init__(self):
        n = self.n
        self.mu = np.full(n, 0.032) if self.mu is None else np.asarray(self.mu, float).reshape(n)
        self.lam = np.full(n, 0.45) if self.lam is None else np.asarray(self.lam, float).reshape(n)
        self.mu_Z = np.full(n, 0.25) if self.mu_Z is None else np.asarray(self.mu_Z, float).reshape(n)
        self.sigma_Z = np.full(n, 0.2) if self.sigma_Z is None else np.asarray(self.sigma_Z, float).reshape(n)
        if self.Sigma is None:
            C = np.full((n, n), self.corr)
            np.fill_diagonal(C, 1.0)
            self.Sigma = np.linalg.cholesky(C)
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if not 0.0 < self.gamma_crra < 1.0:
            raise ValueError("gamma_crra must lie in (0, 1)")
        if np.any(self.lam < 0):
            raise ValueError("jump intensities must be >= 0")
        if np.any(self.sigma_Z < 0):
            raise ValueError("sigma_Z must be >= 0")
        if self.y_b <= 0:
            raise ValueError("y_b must be positive")

    @property
    def cov(self) -> np.ndarray:
        return self.Sigma @ self.Sigma.T


def _check_wealth(y):
    if np.any(np.asarray(ad.value_of(y)) <= 0):
        raise ad.DomainError("wealth must stay strictly positive")


def consumption_problem(cfg: ConsumptionConfig) -> ProblemSpec:
    """Maximise discounted CRRA utility of consumption and terminal wealth.

    State is wealth ``y`` (d=1); action is ``(pi_1..pi_n, c)`` in (0,1)^(n+1).
    Jumps of the n assets are one marked point process with total rate
    ``sum(lam)``; a mark is an n-vector that is zero except at the jumping
    asset, where it holds the log-jump size.
    """
    n, g = cfg.n, cfg.gamma_crra
    excess = (cfg.mu - cfg.r).reshape(n, 1)
    Sig = cfg.Sigma
    lam_total = float(cfg.lam.sum())
    probs = cfg.lam / lam_total if lam_total > 0 else np.full(n, 1.0 / n)

    def drift(t, y, a):
        _check_wealth(y)
        pi, c = a[:, :n], a[:, n:]
        rate = ad.sub(ad.add(cfg.r, ad.matmul(pi, excess)), c)
        return ad.mul(y, rate)

    def diffusion(t, y, a):
        _check_wealth(y)
        row = ad.mul(y, ad.matmul(a[:, :n], Sig))  # (B, k)
        return [row[:, j:j + 1] for j in range(n)]

    def jump(t, y, z, a):
        _check_wealth(y)
        gain = ad.asum(ad.mul(a[:, :n], np.expm1(z)), axis=1, keepdims=True)
        return ad.mul(y, gain)

    def intensity(t, y, a):
        return _column(lam_total, y)

    def running_reward(t, y, a):
        _check_wealth(y)
        c = a[:, n:]
        disc = np.exp(-cfg.rho * np.asarray(ad.value_of(t), dtype=float))
        return ad.mul(disc / g, ad.power(ad.mul(c, y), g))

    def terminal_reward(y):
        _check_wealth(y)
        return ad.mul(np.exp(-cfg.rho * cfg.T) / g, ad.power(y, g))

    def marks(rng, count):
        which = rng.choice(n, size=count, p=probs)
        z = np.zeros((count, n))
        z[np.arange(count), which] = cfg.mu_Z[which] + cfg.sigma_Z[which] * rng.standard_normal(count)
        return z

    box = Measure("uniform_box", T=cfg.T, d=1, box=((0.0, cfg.y_b),))
    return ProblemSpec(
        name="consumption", d=1, k=n, l=n, m=n + 1, T=cfg.T,
        drift=drift, diffusion=diffusion, jump=jump, intensity=intensity,
        running_reward=running_reward, terminal_reward=terminal_reward,
        mark_sampler=marks, sense="maximize", action_set="unit_box",
        has_jumps=lam_total > 0,
        interior_measure=box, terminal_measure=box,
        test_box=((0.0, cfg.T), (0.0, cfg.y_b)),
        state_lower=0.0,
        config=cfg,
    )
