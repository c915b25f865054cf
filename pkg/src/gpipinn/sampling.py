"""Training-point measures, batch assembly and residual-based resampling."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    """Purpose-tagged sub-seed: sha256 of ``"seed/tag1/tag2..."`` folded to 63 bits."""
    key = "/".join([str(int(seed))] + [str(t) for t in tags])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


def rng_for(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))


@dataclass(frozen=True)
class Measure:
    """Sampling-measure descriptor.

    kinds:
      ``gaussian_sqrt_t``  t ~ U[0,T], x | t ~ sqrt(t) N(0, I_d)
      ``gaussian_sqrt_T``  x ~ sqrt(T) N(0, I_d)            (terminal)
      ``uniform_box``      t ~ U[0,T], x ~ U(box), open at a zero lower edge
    """

    kind: str
    T: float
    d: int
    box: tuple = ()

    KINDS = ("gaussian_sqrt_t", "gaussian_sqrt_T", "uniform_box")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown measure descriptor {self.kind!r}")
        if self.kind == "uniform_box" and len(self.box) != self.d:
            raise ValueError("uniform_box needs one (lo, hi) pair per state dimension")


def _uniform_box(rng, box, count):
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    # hi - (hi - lo) * U[0,1) lies in (lo, hi], so a zero lower edge is never hit
    return hi - (hi - lo) * rng.random((count, len(box)))


def sample_interior(measure: Measure, M1: int, seed, mark_sampler=None, marks_per_point: int = 0):
    """Interior points ``(t, x, z)``.

    ``t`` is ``(M1, 1)``, ``x`` is ``(M1, d)``.  ``z`` is ``None`` without a
    mark sampler, ``(M1, l)`` for one mark per point and ``(M1, M3, l)`` for
    ``marks_per_point = M3 > 1``.
    """
    if M1 < 1:
        raise ValueError("M1 must be >= 1")
    base = seed if isinstance(seed, (int, np.integer)) else int(seed)
    rng_t = rng_for(base, "interior", "t")
    rng_x = rng_for(base, "interior", "x")
    t = rng_t.uniform(0.0, measure.T, size=(M1, 1))
    if measure.kind == "gaussian_sqrt_t":
        x = np.sqrt(t) * rng_x.standard_normal((M1, measure.d))
    elif measure.kind == "uniform_box":
        x = _uniform_box(rng_x, measure.box, M1)
    else:
        raise ValueError(f"measure {measure.kind!r} is a terminal measure")
    z = None
    if mark_sampler is not None and marks_per_point > 0:
        rng_z = rng_for(base, "interior", "z")
        raw = np.asarray(mark_sampler(rng_z, M1 * marks_per_point), dtype=float)
        l = raw.size // (M1 * marks_per_point)
        z = raw.reshape(M1, l) if marks_per_point == 1 else raw.reshape(M1, marks_per_point, l)
    return t, x, z


def sample_terminal(measure: Measure, M2: int, seed) -> np.ndarray:
    """Terminal points ``x~`` with shape ``(M2, d)``; ``M2 = 0`` gives an empty array."""
    if M2 < 0:
        raise ValueError("M2 must be >= 0")
    rng = rng_for(int(seed), "terminal")
    if M2 == 0:
        return np.empty((0, measure.d))
    if measure.kind in ("gaussian_sqrt_T", "gaussian_sqrt_t"):
        return np.sqrt(measure.T) * rng.standard_normal((M2, measure.d))
    return _uniform_box(rng, measure.box, M2)


@dataclass
class Batch:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray | None
    terminal: np.ndarray
    seed: int = 0
    measures: tuple = field(default_factory=tuple)

    @property
    def M1(self) -> int:
        return self.t.shape[0]

    @property
    def M2(self) -> int:
        return self.terminal.shape[0]

    def interior_slice(self, idx) -> "Batch":
        z = None if self.z is None else self.z[idx]
        return Batch(self.t[idx], self.x[idx], z, self.terminal, self.seed, self.measures)

    def terminal_slice(self, idx) -> "Batch":
        return Batch(self.t, self.x, self.z, self.terminal[idx], self.seed, self.measures)


def sample_batch(problem, M1: int, M2: int, seed: int, marks_per_point: int = 1) -> Batch:
    """Interior + terminal batch under the problem's default measures."""
    mark_sampler = problem.mark_sampler if problem.has_jumps else None
    t, x, z = sample_interior(problem.interior_measure, M1, seed, mark_sampler, marks_per_point)
    xt = sample_terminal(problem.terminal_measure, M2, seed)
    return Batch(t, x, z, xt, seed, (problem.interior_measure, problem.terminal_measure))


def rad_resample(pool: tuple, residuals, M1: int, seed, k: float = 1.0, c: float = 1.0):
    """Draw ``M1`` pool points (with replacement) with probability
    proportional to ``r**k / mean(r**k) + c``.

    ``pool`` is a tuple of arrays sharing their first axis; returns the same
    tuple restricted to the drawn indices, plus the indices.
    """
    r = np.asarray(residuals, dtype=float).ravel()
    if np.any(r < 0):
        raise ValueError("residuals must be non-negative")
    if r.size == 0 or M1 < 1:
        raise ValueError("need a non-empty pool and M1 >= 1")
    rk = r ** k
    mean = rk.mean()
    if mean == 0.0:
        if c == 0.0:
            raise ValueError("all residuals are zero and c=0: sampling density undefined")
        w = np.full(r.size, c)
    else:
        w = rk / mean + c
    p = w / w.sum()
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(int(seed), "rad")
    idx = rng.choice(r.size, size=M1, replace=True, p=p)
    return tuple(None if a is None else np.asarray(a)[idx] for a in pool), idx
