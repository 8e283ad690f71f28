"""Built-in initial conditions.

An :class:`InitialCondition` is a kind plus keyword parameters; ``build``
samples it on a grid.  Kinds:

``juttner``
    ``n``, ``theta``, ``u`` (spatial four-velocity).
``two_bump``
    Two Juttner components ``(n1, theta1, u1)`` and ``(n2, theta2, u2)``.
``box``
    ``value`` on the sub-box ``|p_i - center_i| <= half_width``.
``truncated``
    ``min(1/eps, f0) 1{|p| < 1/eps} + eps exp(-p0)`` for a base condition
    ``f0`` (any other kind, given as ``base`` plus that kind's parameters).
``file``
    A RELBOLT1 state dump at ``path``; the grid must match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import JuttnerParams, juttner_eval
from .grid import GridFunction, MomentumGrid
from .io import read_state

DEFAULTS = {
    "juttner": {"n": 1.0, "theta": 1.0, "u": (0.0, 0.0, 0.0)},
    "two_bump": {
        "n1": 0.5,
        "theta1": 0.5,
        "u1": (1.0, 0.0, 0.0),
        "n2": 0.5,
        "theta2": 0.5,
        "u2": (-1.0, 0.0, 0.0),
    },
    "box": {"value": 0.1, "half_width": 1.5, "center": (0.0, 0.0, 0.0)},
    "truncated": {"eps": 1e-3, "base": "two_bump"},
    "file": {"path": ""},
}

VECTOR_KEYS = {"u", "u1", "u2", "center"}


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "two_bump"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ValueError(f"unknown initial condition kind {self.kind!r}; expected one of {sorted(DEFAULTS)}")
        allowed = set(DEFAULTS[self.kind])
        if self.kind == "truncated":
            base = self.params.get("base", DEFAULTS["truncated"]["base"])
            if base not in DEFAULTS or base in ("truncated",):
                raise ValueError(f"init.base: unsupported base kind {base!r}")
            allowed |= set(DEFAULTS[base])
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(f"init.{sorted(unknown)[0]}: not a parameter of kind {self.kind!r}")
        merged = dict(DEFAULTS[self.kind])
        if self.kind == "truncated":
            merged.update(DEFAULTS[self.params.get("base", "two_bump")])
        merged.update(self.params)
        for key in VECTOR_KEYS & set(merged):
            vec = tuple(float(c) for c in merged[key])
            if len(vec) != 3:
                raise ValueError(f"init.{key}: expected 3 components")
            merged[key] = vec
        self._check(merged)
        object.__setattr__(self, "params", merged)

    def _check(self, m):
        positive = [k for k in ("n", "theta", "n1", "theta1", "n2", "theta2", "half_width", "eps") if k in m]
        for k in positive:
            if not float(m[k]) > 0:
                raise ValueError(f"init.{k}: must be positive")
        if "value" in m and not float(m["value"]) >= 0:
            raise ValueError("init.value: must be nonnegative")
        if self.kind == "file" and not m["path"]:
            raise ValueError("init.path: required for kind 'file'")

    def _base(self) -> "InitialCondition":
        base = self.params["base"]
        keys = set(DEFAULTS[base])
        return InitialCondition(base, {k: v for k, v in self.params.items() if k in keys})

    def build(self, grid: MomentumGrid) -> GridFunction:
        m = self.params
        if self.kind == "juttner":
            params = JuttnerParams.from_velocity(m["n"], m["theta"], m["u"])
            return GridFunction(grid, juttner_eval(params, grid.nodes))
        if self.kind == "two_bump":
            a = JuttnerParams.from_velocity(m["n1"], m["theta1"], m["u1"])
            b = JuttnerParams.from_velocity(m["n2"], m["theta2"], m["u2"])
            return GridFunction(grid, juttner_eval(a, grid.nodes) + juttner_eval(b, grid.nodes))
        if self.kind == "box":
            offset = np.abs(grid.nodes - np.asarray(m["center"]))
            inside = np.all(offset <= m["half_width"], axis=-1)
            return GridFunction(grid, np.where(inside, float(m["value"]), 0.0))
        if self.kind == "truncated":
            eps = float(m["eps"])
            f0 = self._base().build(grid).values
            radius = np.linalg.norm(grid.nodes, axis=-1)
            values = np.where(radius < 1.0 / eps, np.minimum(1.0 / eps, f0), 0.0) + eps * np.exp(-grid.energies)
            return GridFunction(grid, values)
        f, header = read_state(m["path"])
        if f.grid != grid:
            raise ValueError(
                f"init.path: state grid (n={header['n_per_axis']}, p_max={header['p_max']}) "
                f"does not match the configured grid"
            )
        return f

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}}
