"""DGM and feedforward networks over ``(t, x)`` with a flat parameter vector.

Forward passes are written with the dispatching functions of
:mod:`gpipinn.autodiff`, so inputs may be arrays, tape variables or jets and
parameters may be a plain array or a tape variable.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

CHECKPOINT_MAGIC = "NHJB-CKPT v1"

_OUTPUT_ACTIVATIONS = {
    "softplus": ad.softplus,
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "linear": lambda z: z,
}
_HIDDEN_ACTIVATIONS = {"tanh": ad.tanh}


@dataclass(frozen=True)
class NetworkArch:
    """Architecture descriptor.

    ``L`` is the number of DGM gating layers after ``S1`` (or the number of
    hidden layers for ``kind="feedforward"``); ``N`` the width.  The input
    ``(t, x)`` is mapped to ``(z - input_shift) / input_scale`` before the
    first layer; the shift and scale are fixed, not trained.
    """

    kind: str
    input_dim: int
    output_dim: int = 1
    L: int = 2
    N: int = 32
    hidden_activation: str = "tanh"
    output_activation: str = "linear"
    input_shift: tuple | None = None
    input_scale: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("dgm", "feedforward"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1 or self.L < 1 or self.N < 1:
            raise ValueError("input_dim, output_dim, L and N must all be >= 1")
        if self.hidden_activation not in _HIDDEN_ACTIVATIONS:
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT_ACTIVATIONS:
            raise ValueError(f"unsupported output activation {self.output_activation!r}")
        for name in ("input_shift", "input_scale"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(e) for e in v)
                if len(v) != self.input_dim:
                    raise ValueError(f"{name} must have length input_dim={self.input_dim}")
                object.__setattr__(self, name, v)

    def block_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        n_in, N, out = self.input_dim, self.N, self.output_dim
        if self.kind == "feedforward":
            shapes = []
            prev = n_in
            for i in range(1, self.L + 1):
                shapes += [(f"W{i}", (prev, N)), (f"b{i}", (N,))]
                prev = N
            return shapes + [("W", (prev, out)), ("b", (out,))]
        shapes = [("W1", (n_in, N)), ("b1", (N,))]
        for gate in "zgrh":
            for l in range(1, self.L + 1):
                shapes += [(f"U{gate}{l}", (n_in, N)), (f"W{gate}{l}", (N, N)), (f"b{gate}{l}", (N,))]
        return shapes + [("W", (N, out)), ("b", (out,))]

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.block_shapes())

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "NetworkArch":
        return cls(**json.loads(text))


@dataclass
class ParameterVector:
    """Flat weights plus the name -> (start, stop, shape) partition."""

    arch: NetworkArch
    values: np.ndarray
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.index = {}
        pos = 0
        for name, shape in self.arch.block_shapes():
            size = int(np.prod(shape))
            self.index[name] = (pos, pos + size, shape)
            pos += size
        if self.values.shape != (pos,):
            raise ValueError(f"expected {pos} parameters for this architecture, got {self.values.shape}")

    def __len__(self):
        return self.values.size

    def block(self, name: str) -> np.ndarray:
        a, b, shape = self.index[name]
        return self.values[a:b].reshape(shape)

    def blocks(self, flat=None) -> dict:
        """Block views of ``flat`` (defaults to own values; may be a tape variable)."""
        flat = self.values if flat is None else flat
        return {n: flat[a:b].reshape(shape) for n, (a, b, shape) in self.index.items()}

    def replace(self, values) -> "ParameterVector":
        return ParameterVector(self.arch, np.array(values, dtype=float, copy=True))

    def checksum(self) -> str:
        import hashlib

        return hashlib.sha256(self.values.tobytes()).hexdigest()


def init_params(arch: NetworkArch, seed: int) -> ParameterVector:
    """Glorot-uniform weight blocks, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in arch.block_shapes():
        if len(shape) == 1:
            chunks.append(np.zeros(shape))
        else:
            lim = np.sqrt(6.0 / (shape[0] + shape[1]))
            chunks.append(rng.uniform(-lim, lim, size=shape).ravel())
    return ParameterVector(arch, np.concatenate(chunks))


def _as_column(t, batch_like):
    """Broadcast a scalar/1-d time to a ``(B, 1)`` column."""
    if isinstance(t, (ad.Jet2, ad.Var)):
        return t
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        n = ad.value_of(batch_like.val if isinstance(batch_like, ad.Jet2) else batch_like)
        return np.full((np.shape(n)[0], 1), float(t))
    return t.reshape(-1, 1)


def _network_input(arch: NetworkArch, t, x):
    x_is_lifted = isinstance(x, (ad.Jet2, ad.Var))
    if not x_is_lifted:
        x = np.atleast_2d(np.asarray(x, dtype=float))
    t = _as_column(t, x)
    z = ad.concat([t, x], axis=1)
    if arch.input_shift is not None:
        z = ad.sub(z, np.asarray(arch.input_shift))
    if arch.input_scale is not None:
        z = ad.div(z, np.asarray(arch.input_scale))
    return z


def dgm_forward(params: ParameterVector, t, x, flat=None):
    """DGM value/control network: ``(B, 1+d)`` inputs -> ``(B, output_dim)``.

    ``flat`` optionally replaces ``params.values`` (e.g. by a tape variable).
    """
    arch = params.arch
    if arch.kind != "dgm":
        raise ValueError("dgm_forward needs a DGM architecture")
    w = params.blocks(flat)
    act = _HIDDEN_ACTIVATIONS[arch.hidden_activation]
    z = _network_input(arch, t, x)
    S1 = act(ad.add(ad.matmul(z, w["W1"]), w["b1"]))
    S = S1
    for l in range(1, arch.L + 1):
        Z = act(ad.add(ad.add(ad.matmul(z, w[f"Uz{l}"]), ad.matmul(S, w[f"Wz{l}"])), w[f"bz{l}"]))
        G = act(ad.add(ad.add(ad.matmul(z, w[f"Ug{l}"]), ad.matmul(S1, w[f"Wg{l}"])), w[f"bg{l}"]))
        R = act(ad.add(ad.add(ad.matmul(z, w[f"Ur{l}"]), ad.matmul(S, w[f"Wr{l}"])), w[f"br{l}"]))
        H = act(ad.add(ad.add(ad.matmul(z, w[f"Uh{l}"]), ad.matmul(ad.mul(S, R), w[f"Wh{l}"])), w[f"bh{l}"]))
        S = ad.add(ad.mul(ad.sub(1.0, G), H), ad.mul(Z, S))
    return _OUTPUT_ACTIVATIONS[arch.output_activation](ad.add(ad.matmul(S, w["W"]), w["b"]))


def ff_forward(params: ParameterVector, t, x, flat=None):
    """Plain affine/activation stack over ``(t, x)``."""
    arch = params.arch
    if arch.kind != "feedforward":
        raise ValueError("ff_forward needs a feedforward architecture")
    w = params.blocks(flat)
    act = _HIDDEN_ACTIVATIONS[arch.hidden_activation]
    h = _network_input(arch, t, x)
    for i in range(1, arch.L + 1):
        h = act(ad.add(ad.matmul(h, w[f"W{i}"]), w[f"b{i}"]))
    return _OUTPUT_ACTIVATIONS[arch.output_activation](ad.add(ad.matmul(h, w["W"]), w["b"]))


def forward(params: ParameterVector, t, x, flat=None):
    if params.arch.kind == "dgm":
        return dgm_forward(params, t, x, flat)
    return ff_forward(params, t, x, flat)


class Network:
    """Callable ``(t, x) -> (B, output_dim)`` bound to a parameter source.

    ``flat`` is the tape variable standing in for the weights while a
    gradient is being taken; ``None`` means evaluate numerically.
    """

    def __init__(self, params: ParameterVector, flat=None):
        self.params = params
        self.flat = flat

    def __call__(self, t, x):
        return forward(self.params, t, x, self.flat)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(params: ParameterVector, path) -> None:
    lines = [CHECKPOINT_MAGIC, params.arch.to_json()]
    lines += [format(float(v), ".17g") for v in params.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> ParameterVector:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC!r} checkpoint")
    arch = NetworkArch.from_json(lines[1])
    values = np.array([float(s) for s in lines[2:] if s.strip()], dtype=float)
    return ParameterVector(arch, values)
