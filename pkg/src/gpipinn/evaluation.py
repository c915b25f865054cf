"""Test-set metrics, HJB residual grids and per-point error tables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .csvio import write_csv
from .generator import extended_hamiltonian_mc
from .sampling import rng_for


@dataclass
class TestPoints:
    t: np.ndarray  # (M, 1)
    x: np.ndarray  # (M, d)

    __test__ = False  # not a pytest class

    def __len__(self):
        return self.t.shape[0]


def _numeric(out):
    return np.asarray(ad.value_of(out), dtype=float)


def make_test_grid(problem, M: int = 4096, seed: int = 0) -> TestPoints:
    """``M`` points drawn uniformly from the problem's test box (lower edge open when it is 0)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    box = np.asarray(problem.test_box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    rng = rng_for(seed, "test-grid")
    u = rng.random((M, box.shape[0]))
    pts = lo + (hi - lo) * u
    # states on a zero lower edge are inadmissible for some problems; sample (lo, hi] there
    open_low = (lo == 0.0)
    open_low[0] = False
    pts[:, open_low] = (hi - (hi - lo) * u)[:, open_low]
    return TestPoints(pts[:, :1].copy(), pts[:, 1:].copy())


def lattice_grid(problem, per_axis: int = 32) -> TestPoints:
    """Tensor lattice over the test box (zero lower state edges are shifted inward by one cell)."""
    axes = []
    for j, (lo, hi) in enumerate(problem.test_box):
        if j > 0 and lo == 0.0:
            axes.append(np.linspace(lo, hi, per_axis + 1)[1:])
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return TestPoints(mesh[:, :1].copy(), mesh[:, 1:].copy())


def mae_value(value_fn, reference_fn, points: TestPoints) -> float:
    """Mean absolute deviation of ``value_fn`` from ``reference_fn`` on the test points."""
    if len(points) == 0:
        raise ValueError("test set is empty")
    v = _numeric(value_fn(points.t, points.x)).reshape(-1)
    r = _numeric(reference_fn(points.t, points.x)).reshape(-1)
    return float(np.mean(np.abs(v - r)))


def mae_control(control_fn, reference_fn, points: TestPoints) -> float:
    """Mean Euclidean norm of the control error on the test points."""
    if len(points) == 0:
        raise ValueError("test set is empty")
    M = len(points)
    a = _numeric(control_fn(points.t, points.x)).reshape(M, -1)
    r = _numeric(reference_fn(points.t, points.x)).reshape(M, -1)
    return float(np.mean(np.linalg.norm(a - r, axis=1)))


def mean_abs(fn, points: TestPoints) -> float:
    """Normaliser for relative errors: mean ``|fn|`` (rows reduced by Euclidean norm)."""
    out = _numeric(fn(points.t, points.x)).reshape(len(points), -1)
    return float(np.mean(np.linalg.norm(out, axis=1)))


def residual_grid(value_fn, control_fn, problem, grid: TestPoints, marks_per_point: int = 64,
                  seed: int = 0, chunk: int = 1024) -> dict:
    """``|extended_hamiltonian_mc|`` at every grid node; returns mean, max and the values."""
    vals = []
    rng = rng_for(seed, "residual-grid")
    for s in range(0, len(grid), chunk):
        t, x = grid.t[s:s + chunk], grid.x[s:s + chunk]
        a = _numeric(control_fn(t, x))
        marks = None
        if problem.has_jumps:
            raw = np.asarray(problem.mark_sampler(rng, t.shape[0] * marks_per_point), dtype=float)
            marks = raw.reshape(t.shape[0], marks_per_point, problem.l)
        H = _numeric(extended_hamiltonian_mc(value_fn, t, x, a, marks, problem))
        vals.append(np.abs(H).reshape(-1))
    v = np.concatenate(vals)
    return {"mean": float(v.mean()), "max": float(v.max()), "values": v}


def write_point_errors(path, points: TestPoints, value_fn, value_ref, control_fn=None, control_ref=None) -> None:
    """Per-point CSV ``t, x_1..x_d, v, v_ref, abs_err[, a_err]`` for external heatmaps."""
    M, d = points.x.shape
    v = _numeric(value_fn(points.t, points.x)).reshape(-1)
    r = _numeric(value_ref(points.t, points.x)).reshape(-1)
    header = ["t"] + [f"x{j + 1}" for j in range(d)] + ["v", "v_ref", "abs_err"]
    cols = [points.t[:, 0]] + [points.x[:, j] for j in range(d)] + [v, r, np.abs(v - r)]
    if control_fn is not None and control_ref is not None:
        a = _numeric(control_fn(points.t, points.x)).reshape(M, -1)
        ar = _numeric(control_ref(points.t, points.x)).reshape(M, -1)
        header.append("a_err")
        cols.append(np.linalg.norm(a - ar, axis=1))
    write_csv(path, header, zip(*cols))
