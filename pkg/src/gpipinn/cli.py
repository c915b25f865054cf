"""Command-line driver: ``gpipinn <subcommand> --config FILE [--seed N] [--out DIR] ...``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import reference as ref_mod
from .config import ConfigError, RunDescriptor, parse_config_text
from .csvio import write_csv
from .evaluation import make_test_grid, mean_abs, residual_grid, write_point_errors
from .network import load_checkpoint, save_checkpoint
from .reference import mc_policy_value
from .sampling import derive_seed
from .trainer_recursive import train_gpi_pinn2
from .trainer_residual import train_gpi_pinn1
from .training import METRIC_COLUMNS, Telemetry, net_eval

SUBCOMMANDS = ("train1", "train2", "evaluate", "reference", "simulate", "compare")


def make_reference(desc: RunDescriptor):
    cfg = desc.problem_config()
    if desc.kind == "lqr":
        return ref_mod.lqr_reference(cfg)
    return ref_mod.consumption_reference(cfg)


def _train_config(desc, algorithm, seed, workers, epochs, checkpoint_every):
    over = {}
    if seed is not None:
        over["seed"] = seed
    if workers is not None:
        over["workers"] = workers
    if epochs is not None:
        over["k_max"] = epochs
    if checkpoint_every is not None:
        over["checkpoint_every"] = checkpoint_every
    return desc.train_config(algorithm, **over)


def write_metrics(path, metrics) -> None:
    write_csv(path, METRIC_COLUMNS, (row.as_list() for row in metrics))


def _train(desc, algorithm, tc, out: Path):
    problem = desc.problem_spec()
    reference = make_reference(desc)
    trainer = train_gpi_pinn1 if algorithm == 1 else train_gpi_pinn2
    res = trainer(problem, tc, reference=reference, out_dir=str(out))
    write_metrics(out / "metrics.csv", res.metrics)
    save_checkpoint(res.theta, out / "value.ckpt")
    save_checkpoint(res.phi, out / "control.ckpt")
    return res


def _evaluate(desc, tc, out: Path, ckpt_dir: Path):
    problem = desc.problem_spec()
    reference = make_reference(desc)
    theta = load_checkpoint(ckpt_dir / "value.ckpt")
    phi = load_checkpoint(ckpt_dir / "control.ckpt")
    tel = Telemetry(problem, tc, reference)
    mv, ma = tel.mae(theta, phi)
    pts = tel.points
    grid = make_test_grid(problem, int(desc.eval["residual_points"]), derive_seed(tc.seed, "residual"))
    res = residual_grid(lambda t, x: _net_fn(theta)(t, x), _net_fn(phi), problem, grid,
                        int(desc.eval["marks_per_point"]), derive_seed(tc.seed, "residual-marks"))
    write_csv(out / "evaluation.csv",
              ["mae_v", "mae_a", "rel_mae_v", "rel_mae_a", "residual_mean", "residual_max"],
              [[mv, ma, mv / mean_abs(reference.value, pts), ma / mean_abs(reference.control, pts),
                res["mean"], res["max"]]])
    write_point_errors(out / "point_errors.csv", pts, _net_fn(theta), reference.value, _net_fn(phi), reference.control)
    return mv, ma


def _net_fn(params):
    from .network import Network
    return Network(params)


def _reference_table(desc, out: Path):
    problem = desc.problem_spec()
    reference = make_reference(desc)
    n = int(desc.eval["reference_points"])
    t = np.linspace(0.0, problem.T, n).reshape(-1, 1)
    x0s = desc.x0_list()
    rows = []
    if desc.kind == "lqr":
        cfg = reference.cfg
        const = 0.5 * (np.trace(cfg.Sigma @ cfg.Sigma.T) + cfg.Lambda1 * cfg.zeta)
        h = reference.h(t).reshape(-1)
        f = const * reference.h(t, 1).reshape(-1)
        header = ["t", "h", "f", "x0", "V", "alpha1"]
        for x0 in x0s:
            x = np.full((n, problem.d), x0)
            v = np.asarray(reference.value(t, x)).reshape(-1)
            a = reference.control(t, x)[:, 0]
            rows += [[t[i, 0], h[i], f[i], x0, v[i], a[i]] for i in range(n)]
    else:
        A = reference.A(t).reshape(-1)
        c = reference.rate(t).reshape(-1)
        header = ["t", "A", "c_star", "y0", "V"] + [f"pi{j + 1}" for j in range(problem.config.n)]
        for y0 in x0s:
            y = np.full((n, 1), y0)
            v = np.asarray(reference.value(t, y)).reshape(-1)
            rows += [[t[i, 0], A[i], c[i], y0, v[i], *reference.pi_star] for i in range(n)]
    write_csv(out / "reference.csv", header, rows)


def _simulate(desc, tc, out: Path, ckpt_dir: Path | None):
    problem = desc.problem_spec()
    reference = make_reference(desc)
    if ckpt_dir is not None and (ckpt_dir / "control.ckpt").exists():
        phi = load_checkpoint(ckpt_dir / "control.ckpt")
        policy, label = (lambda t, x: net_eval(phi, t, x)), "trained"
    else:
        policy, label = reference.control, "reference"
    t0 = float(desc.eval["t0"])
    rows = []
    for i, x0 in enumerate(desc.x0_list()):
        x = np.full((1, problem.d), x0)
        est, se = mc_policy_value(problem, policy, t0, x, int(desc.eval["mc_paths"]), float(desc.eval["mc_dt"]),
                                  derive_seed(tc.seed, "simulate", i))
        v = float(np.asarray(reference.value(np.array([[t0]]), x)).reshape(-1)[0])
        rows.append([label, t0, x0, est, se, v])
    write_csv(out / "simulate.csv", ["policy", "t0", "x0", "estimate", "std_error", "reference_value"], rows)


def _compare(desc, seed, workers, epochs, checkpoint_every, out: Path):
    rows = []
    per_epoch = {}
    for algo in (1, 2):
        sub = out / f"algo{algo}"
        sub.mkdir(parents=True, exist_ok=True)
        tc = _train_config(desc, algo, seed, workers, epochs, checkpoint_every)
        tc.record_time = True
        res = _train(desc, algo, tc, sub)
        n = len(res.metrics)
        secs = res.metrics[-1].seconds if n else 0.0
        per_epoch[algo] = secs / n if n else float("nan")
        reference = make_reference(desc)
        tel = Telemetry(desc.problem_spec(), tc, reference)
        mv, ma = tel.mae(res.theta, res.phi)
        rel_v = mv / mean_abs(reference.value, tel.points)
        rows.append([algo, n, secs, per_epoch[algo], mv, rel_v, ma])
    ratio = per_epoch[1] / per_epoch[2] if per_epoch[2] > 0 else float("nan")
    write_csv(out / "compare.csv", ["algorithm", "epochs", "seconds", "seconds_per_epoch", "mae_v", "rel_mae_v",
                                    "mae_a"], rows)
    write_csv(out / "compare_ratio.csv", ["runtime_ratio_algo1_over_algo2"], [[ratio]])
    return ratio


def run(subcommand: str, config, seed: int | None = None, out_dir=".", workers: int | None = None,
        epochs: int | None = None, checkpoint_every: int | None = None, checkpoint=None) -> int:
    """Execute one subcommand; ``config`` is a path or a :class:`RunDescriptor`. Returns an exit status."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
    desc = config if isinstance(config, RunDescriptor) else parse_config_text(Path(config).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(desc.to_text())
    ckpt_dir = Path(checkpoint) if checkpoint is not None else out
    if subcommand in ("train1", "train2"):
        algo = 1 if subcommand == "train1" else 2
        _train(desc, algo, _train_config(desc, algo, seed, workers, epochs, checkpoint_every), out)
    elif subcommand == "evaluate":
        _evaluate(desc, _train_config(desc, 2, seed, workers, epochs, checkpoint_every), out, ckpt_dir)
    elif subcommand == "reference":
        _reference_table(desc, out)
    elif subcommand == "simulate":
        _simulate(desc, _train_config(desc, 2, seed, workers, epochs, checkpoint_every), out,
                  ckpt_dir if checkpoint is not None else None)
    else:
        _compare(desc, seed, workers, epochs, checkpoint_every, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpipinn", description="GPI-PINN solvers for controlled jump-diffusions.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="sectioned key=value experiment file")
    p.add_argument("--seed", type=int, default=None, help="top-level seed (overrides [train] seed)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=None, help="batch-evaluation threads (default 1)")
    p.add_argument("--epochs", type=int, default=None, help="override [train] k_max")
    p.add_argument("--checkpoint-every", type=int, default=None, help="checkpoint interval in epochs (0 = off)")
    p.add_argument("--checkpoint", default=None, help="directory holding value.ckpt/control.ckpt (evaluate, simulate)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.subcommand, args.config, seed=args.seed, out_dir=args.out, workers=args.workers,
                   epochs=args.epochs, checkpoint_every=args.checkpoint_every, checkpoint=args.checkpoint)
    except (ConfigError, ValueError, FileNotFoundError, FloatingPointError, RuntimeError) as exc:
        print(f"gpipinn {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
