"""Ground truth for the benchmarks and a Monte Carlo policy evaluator.

* jump-LQR: Riccati-type ODE for ``h`` integrated backward with RK45, the
  quadratic value ``V = h|x|^2/2 + f(t)`` and the linear feedback control;
* consumption-investment: first-order condition for the constant portfolio
  weights and the ODE for the consumption factor ``A(t)``;
* Euler-Maruyama simulation with thinning for any :class:`ProblemSpec`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import autodiff as ad
from .autodiff import Jet2
from .problem import ConsumptionConfig, LqrConfig, ProblemSpec
from .sampling import rng_for


@dataclass
class OdeSolution:
    """Backward ODE solution on an increasing grid with cubic Hermite interpolants.

    ``values[:, j]`` is state component ``j``; ``derivs`` the matching
    right-hand sides.
    """

    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    rtol: float
    atol: float
    _splines: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._splines = [CubicHermiteSpline(self.t, self.values[:, j], self.derivs[:, j])
                         for j in range(self.values.shape[1])]

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def __call__(self, t, component: int = 0):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t[0] - 1e-12) or np.any(t > self.t[-1] + 1e-12):
            raise ValueError(f"t outside [{self.t[0]}, {self.t[-1]}]")
        return self._splines[component](np.clip(t, self.t[0], self.t[-1]))


def _solve_backward(rhs, y_T, T, grid_size, rtol, atol) -> OdeSolution:
    grid = np.linspace(T, 0.0, grid_size)
    sol = solve_ivp(rhs, (T, 0.0), np.atleast_1d(np.asarray(y_T, dtype=float)), method="RK45",
                    t_eval=grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"RK45 failed: {sol.message}")
    t = sol.t[::-1].copy()
    y = sol.y[:, ::-1].T.copy()
    y[-1] = y_T  # exact terminal condition
    dy = np.array([rhs(ti, yi) for ti, yi in zip(t, y)])
    return OdeSolution(t, y, dy, rtol, atol)


# ---------------------------------------------------------------------------
# Jump-LQR


def _lqr_rhs(cfg: LqrConfig):
    k = cfg.zeta * cfg.Lambda2

    def rhs(t, y):
        h = y[0]
        return np.array([h * h / (2.0 * cfg.c1 + h * k), -h])

    return rhs


def lqr_h_ode(cfg: LqrConfig, grid_size: int = 2001, rtol: float = 1e-9, atol: float = 1e-12) -> OdeSolution:
    """Solve ``h' = h^2 / (2c1 + h zeta Lambda2)``, ``h(T) = 2c2`` backward.

    Component 0 is ``h``; component 1 is ``int_t^T h(s) ds`` (integrated
    alongside so one adaptive error control covers both).
    """
    if cfg.c1 <= 0:
        raise ValueError("c1 must be positive")
    return _solve_backward(_lqr_rhs(cfg), [2.0 * cfg.c2, 0.0], cfg.T, grid_size, rtol, atol)


def lqr_h_closed_form(cfg: LqrConfig, t):
    """Constant-intensity (Lambda2 = 0) solution ``2 c1 c2 / (c1 + c2 (T - t))``."""
    t = np.asarray(t, dtype=float)
    return 2.0 * cfg.c1 * cfg.c2 / (cfg.c1 + cfg.c2 * (cfg.T - t))


def _check_time(t, T):
    tv = np.asarray(ad.value_of(t.val if isinstance(t, Jet2) else t), dtype=float)
    if np.any(tv < -1e-12) or np.any(tv > T + 1e-12):
        raise ValueError(f"t outside [0, {T}]")


def _time_fn_jet(t, f, f1, f2):
    """``g(t)`` where ``t`` may be a jet with numeric components."""
    if isinstance(t, Jet2):
        tv = np.asarray(t.val, dtype=float)
        return ad._chain(t, f(tv), f1(tv), f2(tv))
    return f(np.asarray(t, dtype=float))


def lqr_value(cfg: LqrConfig, h: OdeSolution, t, x):
    """``V(t, x) = h(t)|x|^2 / 2 + (Tr(Sigma Sigma^T) + Lambda1 zeta)/2 * int_t^T h``.

    Accepts arrays (``t`` as ``(B, 1)``, ``x`` as ``(B, d)``) or jets, so it
    doubles as an exact value function for the generator.
    """
    _check_time(t, cfg.T)
    k = cfg.zeta * cfg.Lambda2
    const = 0.5 * (np.trace(cfg.Sigma @ cfg.Sigma.T) + cfg.Lambda1 * cfg.zeta)

    def hp(tv):
        hv = h(tv)
        return hv * hv / (2.0 * cfg.c1 + hv * k)

    def hpp(tv):
        hv = h(tv)
        den = 2.0 * cfg.c1 + hv * k
        return hp(tv) * (2.0 * hv * den - hv * hv * k) / (den * den)

    ht = _time_fn_jet(t, h, hp, hpp)
    It = _time_fn_jet(t, lambda tv: h(tv, 1), lambda tv: -h(tv), lambda tv: -hp(tv))
    sq = ad.asum(ad.mul(x, x), axis=1, keepdims=True)
    return ad.add(ad.mul(ad.mul(0.5, ht), sq), ad.mul(const, It))


def lqr_control(cfg: LqrConfig, h: OdeSolution, t, x):
    """Optimal feedback ``-h(t) x / (2c1 + h(t) zeta Lambda2)``."""
    _check_time(t, cfg.T)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    hv = h(t).reshape(t.shape)
    if x.ndim == 2:
        hv = hv.reshape(-1, 1)
    return -hv * x / (2.0 * cfg.c1 + hv * cfg.zeta * cfg.Lambda2)


@dataclass
class LqrReference:
    cfg: LqrConfig
    h: OdeSolution

    def value(self, t, x):
        return lqr_value(self.cfg, self.h, t, x)

    def control(self, t, x):
        return lqr_control(self.cfg, self.h, t, x)


def lqr_reference(cfg: LqrConfig, grid_size: int = 2001) -> LqrReference:
    return LqrReference(cfg, lqr_h_ode(cfg, grid_size))


def lqr_linear_policy_value(cfg: LqrConfig, gain: float, t, x):
    """Reward functional of the fixed feedback ``a = -gain * x`` (not necessarily optimal).

    ``V = p(t)|x|^2/2 + q(t)`` with the linear ODE
    ``p' = (2 gain - Lambda2 gain^2 zeta) p - 2 c1 gain^2``, ``p(T) = 2 c2`` solved
    in closed form, and ``q(t) = (Tr(Sigma Sigma^T) + Lambda1 zeta)/2 * int_t^T p``.
    Accepts jets like :func:`lqr_value`, so it can be fed to the generator.
    """
    _check_time(t, cfg.T)
    k = float(gain)
    alpha = 2.0 * k - cfg.Lambda2 * k * k * cfg.zeta

    def p(tv):
        tau = cfg.T - tv
        if abs(alpha) < 1e-12:
            return 2.0 * cfg.c2 + 2.0 * cfg.c1 * k * k * tau
        base = 2.0 * cfg.c1 * k * k / alpha
        return base + (2.0 * cfg.c2 - base) * np.exp(-alpha * tau)

    def ip(tv):
        tau = cfg.T - tv
        if abs(alpha) < 1e-12:
            return 2.0 * cfg.c2 * tau + cfg.c1 * k * k * tau * tau
        base = 2.0 * cfg.c1 * k * k / alpha
        return base * tau + (2.0 * cfg.c2 - base) * (-np.expm1(-alpha * tau)) / alpha

    dp = lambda tv: alpha * p(tv) - 2.0 * cfg.c1 * k * k
    pt = _time_fn_jet(t, p, dp, lambda tv: alpha * dp(tv))
    qt = _time_fn_jet(t, ip, lambda tv: -p(tv), lambda tv: -dp(tv))
    const = 0.5 * (np.trace(cfg.Sigma @ cfg.Sigma.T) + cfg.Lambda1 * cfg.zeta)
    sq = ad.asum(ad.mul(x, x), axis=1, keepdims=True)
    return ad.add(ad.mul(ad.mul(0.5, pt), sq), ad.mul(const, qt))


# ---------------------------------------------------------------------------
# Consumption-investment


def _gauss_hermite(mu, sigma, nodes: int = 64):
    """Points/weights for E[g(Z)], Z ~ N(mu, sigma^2); returns ``(n, nodes)`` points."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    mu = np.atleast_1d(mu)[:, None]
    sigma = np.atleast_1d(sigma)[:, None]
    return mu + np.sqrt(2.0) * sigma * x[None, :], w / np.sqrt(np.pi)


def consumption_foc(cfg: ConsumptionConfig, pi, nodes: int = 64):
    """Residual and Jacobian of the portfolio first-order condition at ``pi``."""
    g = cfg.gamma_crra
    pi = np.asarray(pi, dtype=float).reshape(cfg.n)
    z, w = _gauss_hermite(cfg.mu_Z, cfg.sigma_Z, nodes)
    jump = np.expm1(z)  # (n, nodes)
    active = cfg.lam > 0  # assets without jumps contribute nothing (and impose no positivity constraint)
    base = 1.0 + pi[:, None] * jump
    if np.any(base[active] <= 0):
        raise ValueError("1 + pi (e^Z - 1) must stay positive")
    base = np.where(active[:, None], base, 1.0)
    e1 = (base ** (g - 1.0) * jump) @ w
    e2 = (base ** (g - 2.0) * jump * jump) @ w
    C = cfg.cov
    F = (cfg.mu - cfg.r) + (g - 1.0) * C @ pi + cfg.lam * e1
    J = (g - 1.0) * C + np.diag(cfg.lam * (g - 1.0) * e2)
    return F, J


def consumption_pi_star(cfg: ConsumptionConfig, tol: float = 1e-10, max_iter: int = 200, nodes: int = 64) -> np.ndarray:
    """Constant optimal portfolio weights by damped Newton on the first-order condition."""
    pi = np.full(cfg.n, 0.5)
    F, J = consumption_foc(cfg, pi, nodes)
    for _ in range(max_iter):
        norm = np.linalg.norm(F)
        if norm <= tol:
            break
        step = np.linalg.solve(J, -F)
        lam = 1.0
        while lam > 1e-12:
            trial = pi + lam * step
            try:
                Ft, Jt = consumption_foc(cfg, trial, nodes)
            except ValueError:
                lam *= 0.5
                continue
            if np.linalg.norm(Ft) < norm or lam < 1e-6:
                break
            lam *= 0.5
        pi, F, J = trial, Ft, Jt
    else:
        if np.linalg.norm(F) > tol:
            raise RuntimeError(f"Newton did not converge in {max_iter} iterations (|F| = {np.linalg.norm(F):.3e})")
    if np.any(pi <= 0) or np.any(pi >= 1):
        warnings.warn(f"optimal weights {pi} lie outside the action set (0,1)^n", RuntimeWarning)
    return pi


def _consumption_kappa(cfg: ConsumptionConfig, pi, nodes: int = 64) -> float:
    """Constant ``kappa`` in the autonomous ODE ``A' = kappa A + (gamma-1) A^(gamma/(gamma-1))``."""
    g = cfg.gamma_crra
    pi = np.asarray(pi, dtype=float).reshape(cfg.n)
    z, w = _gauss_hermite(cfg.mu_Z, cfg.sigma_Z, nodes)
    jump_term = float(cfg.lam @ (((1.0 + pi[:, None] * np.expm1(z)) ** g - 1.0) @ w))
    growth = cfg.r + (cfg.mu - cfg.r) @ pi
    risk = 0.5 * g * (g - 1.0) * pi @ cfg.cov @ pi
    return float(cfg.rho - g * growth - risk - jump_term)


@dataclass
class ConsumptionReference:
    """Closed-form-up-to-ODE solution of the consumption-investment problem.

    Values use time-0 discounting, ``V(t, y) = exp(-rho t) A(t) y^gamma / gamma``.
    """

    cfg: ConsumptionConfig
    pi_star: np.ndarray
    A: OdeSolution
    kappa: float

    def _dA(self, Av):
        g = self.cfg.gamma_crra
        return self.kappa * Av + (g - 1.0) * Av ** (g / (g - 1.0))

    def _ddA(self, Av):
        g = self.cfg.gamma_crra
        return (self.kappa + g * Av ** (1.0 / (g - 1.0))) * self._dA(Av)

    def rate(self, t):
        """Optimal consumption fraction ``A(t)^(1/(gamma-1))`` (wealth independent)."""
        return np.asarray(self.A(t)) ** (1.0 / (self.cfg.gamma_crra - 1.0))

    def value(self, t, y):
        """Value at ``(t, y)``; accepts jets with numeric components as well as arrays."""
        _check_time(t, self.cfg.T)
        g, rho = self.cfg.gamma_crra, self.cfg.rho

        def f(tv):
            return np.exp(-rho * tv) * self.A(tv)

        def f1(tv):
            Av = self.A(tv)
            return np.exp(-rho * tv) * (self._dA(Av) - rho * Av)

        def f2(tv):
            Av = self.A(tv)
            return np.exp(-rho * tv) * (self._ddA(Av) - 2.0 * rho * self._dA(Av) + rho * rho * Av)

        coef = _time_fn_jet(t, f, f1, f2)
        return ad.mul(ad.mul(coef, 1.0 / g), ad.power(y, g))

    def control(self, t, y=None):
        """Optimal action ``(pi*, c*(t))`` per row, shape ``(B, n+1)``."""
        t = np.asarray(t, dtype=float).reshape(-1)
        c = self.rate(t).reshape(-1, 1)
        pi = np.broadcast_to(self.pi_star, (t.size, self.cfg.n))
        return np.hstack([pi, c])


def consumption_A_ode(cfg: ConsumptionConfig, pi_star, grid_size: int = 2001,
                      rtol: float = 1e-9, atol: float = 1e-12) -> OdeSolution:
    """Backward RK45 solve of the consumption factor ODE with ``A(T) = 1``."""
    kappa = _consumption_kappa(cfg, pi_star)
    g = cfg.gamma_crra

    def rhs(t, y):
        A = max(y[0], 1e-300)
        return np.array([kappa * A + (g - 1.0) * A ** (g / (g - 1.0))])

    return _solve_backward(rhs, [1.0], cfg.T, grid_size, rtol, atol)


def consumption_reference(cfg: ConsumptionConfig, grid_size: int = 2001) -> ConsumptionReference:
    """Solve for ``pi*`` and ``A(t)`` and bundle them."""
    pi = consumption_pi_star(cfg)
    return ConsumptionReference(cfg, pi, consumption_A_ode(cfg, pi, grid_size), _consumption_kappa(cfg, pi))


# ---------------------------------------------------------------------------
# Monte Carlo simulation


@dataclass
class PathSample:
    times: np.ndarray
    states: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    controls: np.ndarray
    reward: float
    truncated: bool = False


@dataclass
class SimulationResult:
    rewards: np.ndarray  # (P,)
    terminal: np.ndarray  # (P, d)
    jump_counts: np.ndarray  # (P,)
    truncated: np.ndarray  # (P,) bool
    inter_jump_times: list = field(default_factory=list)


def simulate_paths(spec: ProblemSpec, policy, x0, t0: float = 0.0, dt: float = 1e-3, n_paths: int = 1,
                   seed: int = 0, dW=None, safety: float = 0.1, record: bool = False):
    """Euler-Maruyama between jumps, jumps by per-step thinning.

    ``policy(t, x)`` maps a ``(P, 1)`` time column and ``(P, d)`` states to
    ``(P, m)`` actions.  ``dW`` optionally supplies the Brownian increments
    ``(n_steps, P, k)`` (for shared-randomness refinement studies).  With
    ``record=True`` (single path) a :class:`PathSample` is returned.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    P, d = n_paths, spec.d
    n_steps = int(math.ceil((spec.T - t0) / dt - 1e-9))
    rng_w = rng_for(seed, "sim", "brownian")
    rng_n = rng_for(seed, "sim", "proposals")
    rng_u = rng_for(seed, "sim", "accept")
    rng_z = rng_for(seed, "sim", "marks")
    x = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1, d), (P, d)).copy()
    reward = np.zeros(P)
    jumps = np.zeros(P, dtype=int)
    alive = np.ones(P, dtype=bool)
    last_jump = np.full(P, t0)
    gaps: list = []
    rec_t, rec_x, rec_a, rec_jt, rec_jz = [t0], [x[0].copy()], [], [], []
    t = t0
    for i in range(n_steps):
        h = min(dt, spec.T - t)
        tcol = np.full((P, 1), t)
        a = np.asarray(policy(tcol, x), dtype=float).reshape(P, spec.m)
        reward += np.where(alive, np.asarray(spec.running_reward(tcol, x, a)).reshape(P) * h, 0.0)
        beta = np.asarray(spec.drift(tcol, x, a), dtype=float)
        cols = spec.diffusion(tcol, x, a)
        inc = dW[i] if dW is not None else rng_w.standard_normal((P, spec.k)) * np.sqrt(h)
        x_new = x + beta * h
        for j, c in enumerate(cols):
            x_new = x_new + np.asarray(c, dtype=float) * inc[:, j:j + 1]
        if spec.has_jumps:
            lam = np.asarray(spec.intensity(tcol, x, a), dtype=float).reshape(P)
            lam_bar = lam * (1.0 + safety)
            n_prop = rng_n.poisson(lam_bar * h)
            if n_prop.max(initial=0) > 0:
                n_max = int(n_prop.max())
                offsets = np.sort(np.where(np.arange(n_max)[None, :] < n_prop[:, None],
                                           rng_n.random((P, n_max)), np.inf), axis=1)
                x_pre = x.copy()
                for r in range(n_max):
                    active = (n_prop > r) & alive
                    if not active.any():
                        break
                    lam_now = np.asarray(spec.intensity(tcol, x_pre, a), dtype=float).reshape(P)
                    u = rng_u.random(P)
                    accept = active & (u * lam_bar < lam_now)
                    if not accept.any():
                        continue
                    idx = np.flatnonzero(accept)
                    z = np.asarray(spec.mark_sampler(rng_z, idx.size), dtype=float).reshape(idx.size, spec.l)
                    gam = np.asarray(spec.jump(tcol[idx], x_pre[idx], z, a[idx]), dtype=float)
                    x_pre[idx] += gam
                    x_new[idx] += gam
                    jt = t + offsets[idx, r] * h
                    gaps.extend((jt - last_jump[idx]).tolist())
                    last_jump[idx] = jt
                    jumps[idx] += 1
                    if record:
                        rec_jt.extend(jt.tolist())
                        rec_jz.extend(z.tolist())
        x = np.where(alive[:, None], x_new, x)
        if spec.state_lower is not None:
            out = np.any(x <= spec.state_lower, axis=1) & alive
            alive &= ~out
        t = t + h
        if record:
            rec_t.append(t)
            rec_x.append(x[0].copy())
            rec_a.append(a[0].copy())
        if not alive.any():
            break
    ok = alive
    if np.any(ok):
        term = np.asarray(spec.terminal_reward(x[ok]), dtype=float).reshape(-1)
        reward[ok] += term
    truncated = ~alive
    if record:
        return PathSample(np.array(rec_t), np.array(rec_x), np.array(rec_jt), np.array(rec_jz).reshape(-1, spec.l),
                          np.array(rec_a), float(reward[0]), bool(truncated[0]))
    return SimulationResult(reward, x, jumps, truncated, gaps)


def simulate_path(spec: ProblemSpec, policy, x0, dt: float, seed: int, t0: float = 0.0) -> PathSample:
    """One recorded path from ``(t0, x0)``."""
    return simulate_paths(spec, policy, x0, t0=t0, dt=dt, n_paths=1, seed=seed, record=True)


def mc_policy_value(spec: ProblemSpec, policy, t, x, n_paths: int, dt: float, seed: int):
    """Mean and standard error of the simulated reward from ``(t, x)``."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    res = simulate_paths(spec, policy, x, t0=float(t), dt=dt, n_paths=n_paths, seed=seed)
    if res.truncated.any():
        warnings.warn(f"{int(res.truncated.sum())} paths left the state domain and were truncated", RuntimeWarning)
    est = float(res.rewards.mean())
    se = float(res.rewards.std(ddof=1) / np.sqrt(n_paths))
    return est, se
