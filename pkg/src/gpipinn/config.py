"""Sectioned ``key = value`` experiment files (``[problem]``, ``[train]``, ``[eval]``).

Every key has a default, so a file may contain as little as ``kind = lqr``.
Environment variables ``GPIPINN_<SECTION>_<KEY>`` override file values.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .problem import ConsumptionConfig, LqrConfig, consumption_problem, lqr_problem
from .training import TrainConfig

ENV_PREFIX = "GPIPINN_"

PROBLEM_DEFAULTS = {
    "lqr": {"d": 1, "T": 1.0, "c1": 1.0, "c2": 0.25, "Lambda1": 0.0, "Lambda2": 0.0, "matrix_seed": 0,
            "train_half_width": 0.0},
    "consumption": {"n": 1, "T": 1.0, "r": 0.02, "rho": 0.045, "gamma": 0.3, "mu": 0.032, "corr": 0.2,
                    "lam": 0.45, "mu_Z": 0.25, "sigma_Z": 0.2, "y_b": 150.0},
}
# default boundary weights per (problem kind, algorithm)
XI_DEFAULTS = {("lqr", 1): 1.0, ("lqr", 2): 45.0, ("consumption", 1): 1.0, ("consumption", 2): 10.0}

EVAL_DEFAULTS = {"marks_per_point": 64, "residual_points": 400, "mc_paths": 10000, "mc_dt": 1e-3,
                 "x0": "0,1,2", "t0": 0.0, "reference_points": 101}

_TRAIN_TYPES = {name: type(getattr(TrainConfig(), name)) for name in TrainConfig.field_names()}


class ConfigError(ValueError):
    pass


@dataclass
class RunDescriptor:
    """Resolved configuration: problem kind and parameters, training and evaluation settings."""

    kind: str
    problem: dict
    train: dict
    eval: dict
    xi_explicit: bool = False
    raw_train: dict = field(default_factory=dict)

    def train_config(self, algorithm: int, **overrides) -> TrainConfig:
        kw = dict(self.train)
        if not self.xi_explicit:
            kw["xi"] = XI_DEFAULTS[(self.kind, algorithm)]
        kw.update(overrides)
        return TrainConfig(**kw)

    def problem_config(self):
        p = self.problem
        if self.kind == "lqr":
            return LqrConfig(d=p["d"], T=p["T"], c1=p["c1"], c2=p["c2"], Lambda1=p["Lambda1"],
                             Lambda2=p["Lambda2"], matrix_seed=p["matrix_seed"],
                             train_half_width=p["train_half_width"])
        n = p["n"]
        return ConsumptionConfig(n=n, T=p["T"], r=p["r"], rho=p["rho"], gamma_crra=p["gamma"],
                                 mu=np.full(n, p["mu"]), corr=p["corr"], lam=np.full(n, p["lam"]),
                                 mu_Z=np.full(n, p["mu_Z"]), sigma_Z=np.full(n, p["sigma_Z"]), y_b=p["y_b"])

    def problem_spec(self):
        cfg = self.problem_config()
        return lqr_problem(cfg) if self.kind == "lqr" else consumption_problem(cfg)

    def x0_list(self):
        return [float(s) for s in str(self.eval["x0"]).split(",") if s.strip()]

    def to_text(self) -> str:
        """Serialise every resolved key (re-parsing gives an equal descriptor)."""
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["problem"] = {"kind": self.kind, **{k: _fmt(v) for k, v in self.problem.items()}}
        train = {k: _fmt(v) for k, v in self.train.items() if k != "xi" or self.xi_explicit}
        cp["train"] = train
        cp["eval"] = {k: _fmt(v) for k, v in self.eval.items()}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    def __eq__(self, other):
        return (isinstance(other, RunDescriptor) and self.kind == other.kind and self.problem == other.problem
                and self.train == other.train and self.eval == other.eval and self.xi_explicit == other.xi_explicit)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(section: str, key: str, raw: str, like):
    try:
        if isinstance(like, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot convert {raw!r} to {type(like).__name__}") from None


def parse_config_text(text: str, env=None) -> RunDescriptor:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown_sections = [s for s in cp.sections() if s not in ("problem", "train", "eval")]
    if unknown_sections:
        raise ConfigError(f"unknown section(s): {', '.join(unknown_sections)}")
    values = {s: dict(cp[s]) if cp.has_section(s) else {} for s in ("problem", "train", "eval")}
    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        section, _, key = rest.partition("_")
        section = section.lower()
        if section not in values or not key:
            raise ConfigError(f"environment override {name}: expected {ENV_PREFIX}<PROBLEM|TRAIN|EVAL>_<key>")
        values[section][_match_key(section, key, values[section].get("kind"))] = raw

    if "kind" not in values["problem"]:
        raise ConfigError("[problem] kind is required (lqr or consumption)")
    kind = values["problem"].pop("kind").strip()
    if kind not in PROBLEM_DEFAULTS:
        raise ConfigError(f"[problem] kind must be one of {sorted(PROBLEM_DEFAULTS)}, got {kind!r}")

    problem = dict(PROBLEM_DEFAULTS[kind])
    _apply("problem", values["problem"], problem)
    train = {k: getattr(TrainConfig(), k) for k in TrainConfig.field_names()}
    xi_explicit = "xi" in values["train"]
    _apply("train", values["train"], train)
    ev = dict(EVAL_DEFAULTS)
    _apply("eval", values["eval"], ev)
    desc = RunDescriptor(kind, problem, train, ev, xi_explicit)
    try:
        desc.train_config(2)
        desc.problem_config()
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if ev["mc_paths"] < 2 or ev["mc_dt"] <= 0 or ev["marks_per_point"] < 1 or ev["reference_points"] < 2:
        raise ConfigError("[eval] needs mc_paths >= 2, mc_dt > 0, marks_per_point >= 1, reference_points >= 2")
    return desc


def _match_key(section, key, kind):
    """Environment keys are upper case; map them back to the canonical spelling."""
    candidates = set(EVAL_DEFAULTS) | set(_TRAIN_TYPES) | {"kind"}
    for d in PROBLEM_DEFAULTS.values():
        candidates |= set(d)
    for c in candidates:
        if c.lower() == key.lower():
            return c
    return key


def _apply(section: str, given: dict, target: dict):
    unknown = sorted(set(given) - set(target))
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    for key, raw in given.items():
        target[key] = _convert(section, key, raw, target[key])


def parse_config(path, env=None):
    """Read ``path``; returns ``(ProblemSpec, TrainConfig, RunDescriptor)``.

    The ``TrainConfig`` carries the Algorithm 2 boundary weight unless ``xi``
    is set explicitly; use :meth:`RunDescriptor.train_config` for Algorithm 1.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        desc = parse_config_text(fh.read(), env)
    return desc.problem_spec(), desc.train_config(2), desc
