"""Time integration of the homogeneous equation ``df/dt = Q(f, f)`` and diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .collision import CLOSURES, CollisionTerms, ScatterKernel, collision_terms
from .equilibrium import JuttnerParams, fit_juttner, juttner_grid, moments
from .grid import INTERPOLATIONS, GridFunction, MomentumGrid
from .initial import InitialCondition
from .io import write_state
from .quadrature import SphereQuadrature

SCHEMES = ("exp_euler", "rk4")
TIME_UNITS = ("collision", "absolute")


class ConfigError(ValueError):
    """Invalid simulation setting; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalAbort(RuntimeError):
    """The state became non-finite; ``dump`` is the last good state's file, if written."""

    def __init__(self, message: str, dump: Path | None = None):
        super().__init__(message)
        self.dump = dump


class StabilityWarning(RuntimeWarning):
    """``dt * max L`` exceeds 2, beyond the explicit stability bound."""


@dataclass(frozen=True)
class SimConfig:
    """Complete description of a run.

    With ``time_unit = "collision"`` both ``dt`` and ``t_end`` are multiples
    of ``1 / C`` where ``C`` is the largest initial collision frequency
    ``max_p L f0(p)``; with ``"absolute"`` they are plain times.
    """

    n_per_axis: int = 12
    p_max: float = 6.0
    c_sigma: float = 1.0
    n_polar: int = 16
    n_azimuth: int = 16
    interpolation: str = "cubic"
    closure: str = "closed"
    scheme: str = "exp_euler"
    dt: float = 0.5
    t_end: float = 10.0
    time_unit: str = "collision"
    conserve_projection: bool = False
    init: InitialCondition = field(default_factory=InitialCondition)
    rho: float = 3.0
    output_every: int = 1
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("grid.n_per_axis", isinstance(self.n_per_axis, (int, np.integer)) and self.n_per_axis >= 2, "must be an integer >= 2"),
            ("grid.p_max", self.p_max > 0, "must be positive"),
            ("kernel.c_sigma", self.c_sigma > 0, "must be positive"),
            ("quadrature.n_polar", self.n_polar >= 1, "must be at least 1"),
            ("quadrature.n_azimuth", self.n_azimuth >= 1, "must be at least 1"),
            ("quadrature.interpolation", self.interpolation in INTERPOLATIONS, f"must be one of {sorted(INTERPOLATIONS)}"),
            ("quadrature.closure", self.closure in CLOSURES, f"must be one of {list(CLOSURES)}"),
            ("time.scheme", self.scheme in SCHEMES, f"must be one of {list(SCHEMES)}"),
            ("time.dt", self.dt > 0, "must be positive"),
            ("time.t_end", self.t_end >= 0, "must be nonnegative"),
            ("time.time_unit", self.time_unit in TIME_UNITS, f"must be one of {list(TIME_UNITS)}"),
            ("diagnostics.rho", self.rho >= 0, "must be nonnegative"),
            ("diagnostics.output_every", self.output_every >= 1, "must be at least 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)

    @property
    def grid(self) -> MomentumGrid:
        return MomentumGrid(self.n_per_axis, self.p_max)

    @property
    def kernel(self) -> ScatterKernel:
        return ScatterKernel(self.c_sigma)

    @property
    def sphere(self) -> SphereQuadrature:
        return SphereQuadrature(self.n_polar, self.n_azimuth)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = self.init.to_dict()
        return d


def terms(f: GridFunction, cfg: SimConfig, entropy: bool = False) -> CollisionTerms:
    """Collision terms at every node under the configuration's discretization."""
    return collision_terms(
        f, None, cfg.kernel, cfg.sphere, entropy=entropy, interpolation=cfg.interpolation, closure=cfg.closure
    )


@dataclass(frozen=True, eq=False)
class StepResult:
    f: GridFunction
    start: CollisionTerms
    clipped_mass: float = 0.0
    unstable: bool = False


def _finite(f: GridFunction, values: np.ndarray) -> GridFunction:
    if not np.all(np.isfinite(values)):
        raise NumericalAbort("non-finite state")
    return f.with_values(values)


def _check_stability(dt: float, t: CollisionTerms) -> bool:
    unstable = dt * float(t.frequency.max()) > 2.0
    if unstable:
        warnings.warn(f"dt * max L = {dt * float(t.frequency.max()):.3g} exceeds 2", StabilityWarning, stacklevel=3)
    return unstable


def step_exp_euler(f: GridFunction, cfg: SimConfig, dt: float, start: CollisionTerms | None = None) -> StepResult:
    """Exponential Euler step of the Duhamel form with ``L`` and ``Q+`` frozen at ``f``.

    ``f_new = exp(-dt L) f + dt phi(dt L) Q+`` with ``phi(z) = (1 - exp(-z)) / z``,
    the exact solution of ``df/dt = Q+ - L f`` over the step.  It is
    nonnegative whenever ``f`` is and leaves any ``f`` with ``Q+ = L f``
    unchanged.
    """
    t = start if start is not None else terms(f, cfg)
    z = dt * t.frequency
    decay = np.exp(-z)
    phi = np.ones_like(z)
    nz = z > 1e-12
    phi[nz] = -np.expm1(-z[nz]) / z[nz]
    values = decay * f.values + dt * phi * t.gain
    return StepResult(_finite(f, values), t)


def step_rk4(f: GridFunction, cfg: SimConfig, dt: float, start: CollisionTerms | None = None) -> StepResult:
    """Classical four-stage Runge-Kutta step; negative values are clipped to 0.

    Intermediate stages may be negative; they are evaluated on their
    positive part.  The clipped mass is reported.
    """
    t1 = start if start is not None else terms(f, cfg)
    unstable = _check_stability(dt, t1)
    h3 = f.grid.cell_volume

    def rhs(values):
        g = _finite(f, np.maximum(values, 0.0))
        return terms(g, cfg).total

    k1 = t1.total
    k2 = rhs(f.values + 0.5 * dt * k1)
    k3 = rhs(f.values + 0.5 * dt * k2)
    k4 = rhs(f.values + dt * k3)
    values = f.values + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    clipped = float(-values[values < 0].sum() * h3)
    return StepResult(_finite(f, np.maximum(values, 0.0)), t1, clipped, unstable)


def project_conservation(f: GridFunction, target: np.ndarray) -> tuple[GridFunction, float]:
    """Restore the moments ``(I0, T00, T10, T20, T30)`` to ``target``.

    The correction is ``f * (c . phi)`` with ``phi = (1, p0, p1, p2, p3)``,
    i.e. the least-squares correction in the invariant span weighted by
    ``1/f``; it keeps the support of ``f``.  Returns the new function and the
    mass clipped if the correction drove a node negative.
    """
    grid = f.grid
    h3 = grid.cell_volume
    phi = np.stack([np.ones(grid.shape), grid.energies, *np.moveaxis(grid.nodes, -1, 0)])
    phi = phi.reshape(5, -1)
    v = f.values.reshape(-1)
    current = phi @ v * h3
    gram = (phi * v) @ phi.T * h3
    try:
        c = np.linalg.solve(gram, target - current)
    except np.linalg.LinAlgError:
        return f, 0.0
    values = v * (1.0 + c @ phi)
    clipped = float(-values[values < 0].sum() * h3)
    return f.with_values(np.maximum(values, 0.0).reshape(grid.shape)), clipped


def moment_vector(f: GridFunction) -> np.ndarray:
    return moments(f).vector


def entropy(f: GridFunction) -> float:
    """``H(f) = int f ln f dp`` on the grid, with ``0 ln 0 = 0``."""
    v = f.values
    pos = v > 0
    return float((v[pos] * np.log(v[pos])).sum() * f.grid.cell_volume)


def entropy_production(
    f: GridFunction,
    kernel: ScatterKernel | None = None,
    sq: SphereQuadrature | None = None,
    interpolation: str = "cubic",
    closure: str = "closed",
) -> tuple[float, int]:
    """Entropy production ``D(f)`` and the number of capped logarithms.

    ``D = 1/4 int v_phi sigma (f'f'_* - f f_*) log(f'f'_* / (f f_*)) domega dp dq``,
    the symmetrized form for which ``dH/dt = -D`` along solutions.
    """
    t = collision_terms(f, None, kernel, sq, entropy=True, interpolation=interpolation, closure=closure)
    return _production(f, t), t.cap_count


def _production(f: GridFunction, t: CollisionTerms) -> float:
    return 0.25 * float(t.entropy_density.sum()) * f.grid.cell_volume


def norms(f: GridFunction, rho: float) -> tuple[float, float, float, float]:
    """``(linf, linf_rho, l1_1, l1_rho)`` with weights ``(p0)^1`` and ``(p0)^rho``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    v = np.abs(f.values)
    e = f.grid.energies
    h3 = f.grid.cell_volume
    return (
        float(v.max()),
        float((e**rho * v).max()),
        float((e * v).sum() * h3),
        float((e**rho * v).sum() * h3),
    )


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: tuple
    energy: float
    H: float
    D: float
    linf: float
    linf_rho: float
    l1_1: float
    l1_rho: float
    dist_l1_to_J: float
    clipped_mass: float = 0.0
    cap_count: int = 0

    def row(self) -> tuple:
        return (
            self.t,
            self.mass,
            *self.momentum,
            self.energy,
            self.H,
            self.D,
            self.linf,
            self.linf_rho,
            self.l1_1,
            self.l1_rho,
            self.dist_l1_to_J,
            self.clipped_mass,
            self.cap_count,
        )


def diagnostics(
    f: GridFunction,
    t: float,
    rho: float,
    j_grid: GridFunction,
    production: float,
    clipped_mass: float = 0.0,
    cap_count: int = 0,
) -> DiagnosticsRecord:
    m = moments(f)
    return DiagnosticsRecord(
        t=float(t),
        mass=m.I0,
        momentum=(m.T10, m.T20, m.T30),
        energy=m.T00,
        H=entropy(f),
        D=production,
        **dict(zip(("linf", "linf_rho", "l1_1", "l1_rho"), norms(f, rho))),
        dist_l1_to_J=float(np.abs(f.values - j_grid.values).sum() * f.grid.cell_volume),
        clipped_mass=clipped_mass,
        cap_count=cap_count,
    )


@dataclass(eq=False)
class RunResult:
    config: SimConfig
    records: list
    states: list
    final: GridFunction
    j_params: JuttnerParams | None
    c_max: float
    dt: float
    n_steps: int
    unstable: bool = False
    frequencies: list = field(default_factory=list)
    gains: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def prefix(self, t: float) -> "RunResult":
        """The part of the run up to time ``t`` (records at ``t`` included)."""
        keep = sum(1 for r in self.records if r.t <= t * (1.0 + 1e-9))
        return replace(
            self,
            records=self.records[:keep],
            states=self.states[:keep],
            frequencies=self.frequencies[:keep],
            gains=self.gains[:keep],
            final=self.states[keep - 1] if self.states else self.final,
        )


@dataclass(frozen=True)
class DiscretizationBudget:
    """Spurious rates of the discrete operator at the fitted equilibrium ``J``.

    The continuum operator leaves ``J`` fixed and produces no entropy there,
    so whatever the grid operator does to ``J`` measures its discretization
    error:

    ``residual_rate``
        ``int |Q(J, J)| dp``, the drift rate of the L1 distance.
    ``entropy_rate``
        ``int |Q(J, J) (1 + ln J)| dp``, the drift rate of ``H``.
    ``production_floor``
        ``D(J)``.
    """

    residual_rate: float
    entropy_rate: float
    production_floor: float

    @classmethod
    def measure(cls, cfg: SimConfig, j_params: JuttnerParams) -> "DiscretizationBudget":
        j = juttner_grid(cfg.grid, j_params)
        t = terms(j, cfg, entropy=True)
        h3 = cfg.grid.cell_volume
        pos = j.values > 0
        log_j = np.zeros_like(j.values)
        log_j[pos] = np.log(j.values[pos])
        return cls(
            residual_rate=float(np.abs(t.total).sum() * h3),
            entropy_rate=float(np.abs(t.total * (1.0 + log_j))[pos].sum() * h3),
            production_floor=_production(j, t),
        )

    def entropy_balance(self, times: np.ndarray, production: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoidal ``int_0^t D`` at each time, and the budget for comparing it with ``H(0) - H(t)``.

        The budget adds the spurious entropy drift and the production floor
        over ``[0, t]`` to half the gap between the left and right Riemann
        sums, which bracket the integral wherever ``D`` is monotone.
        """
        dt = np.diff(times)
        trap = np.concatenate([[0.0], np.cumsum(0.5 * dt * (production[1:] + production[:-1]))])
        spread = np.concatenate([[0.0], np.cumsum(0.5 * dt * np.abs(np.diff(production)))])
        return trap, spread + times * (self.entropy_rate + self.production_floor)


def time_step(cfg: SimConfig, c_max: float) -> tuple[float, int]:
    """Uniform step and step count covering ``[0, t_end]``."""
    if cfg.time_unit == "collision" and not c_max > 0:
        raise ConfigError("time.time_unit", "collision units need a nonzero initial collision frequency")
    scale = 1.0 / c_max if cfg.time_unit == "collision" else 1.0
    dt = cfg.dt * scale
    t_end = cfg.t_end * scale
    n = int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    return (t_end / n if n else dt), n


def run(
    cfg: SimConfig,
    f0: GridFunction | None = None,
    on_record: Callable[[DiagnosticsRecord], None] | None = None,
    keep_states: bool = True,
    dump_dir: Path | None = None,
) -> RunResult:
    """Integrate from the configured initial condition to ``t_end``.

    A record is emitted every ``output_every`` steps and at ``t_end``; with
    ``keep_states`` the state, collision frequency and gain at each record
    are kept as well.  The
    distance to equilibrium is measured against the Juttner function fitted
    once to the initial moments.  A non-finite state aborts the run with
    :class:`NumericalAbort` after dumping the last good state to
    ``dump_dir`` (when given).
    """
    grid = cfg.grid
    f = f0 if f0 is not None else cfg.init.build(grid)
    if f.grid != grid:
        raise ConfigError("init", "initial state grid does not match the configured grid")
    target = moment_vector(f)
    j_params = None
    j_grid = GridFunction.zeros(grid)
    if not f.is_zero:
        j_params = fit_juttner(moments(f))
        j_grid = juttner_grid(grid, j_params)

    current = terms(f, cfg, entropy=True)
    c_max = float(current.frequency.max())
    dt, n_steps = time_step(cfg, c_max)
    stepper = step_rk4 if cfg.scheme == "rk4" else step_exp_euler
    records, states, frequencies, gains = [], [], [], []
    clipped_total = 0.0
    unstable = False

    def emit(g, t, tm):
        rec = diagnostics(g, t, cfg.rho, j_grid, _production(g, tm), clipped_total, tm.cap_count)
        records.append(rec)
        if keep_states:
            states.append(g)
            frequencies.append(tm.frequency)
            gains.append(tm.gain)
        if on_record is not None:
            on_record(rec)

    emit(f, 0.0, current)
    for k in range(1, n_steps + 1):
        try:
            res = stepper(f, cfg, dt, current)
        except NumericalAbort:
            dump = None
            if dump_dir is not None:
                dump = Path(dump_dir) / "last_good_state.bin"
                write_state(dump, f, cfg.rho, t=(k - 1) * dt)
            raise NumericalAbort(f"non-finite state at step {k} (t = {k * dt:.6g})", dump) from None
        unstable |= res.unstable
        g = res.f
        clipped_total += res.clipped_mass
        if cfg.conserve_projection:
            g, clipped = project_conservation(g, target)
            clipped_total += clipped
        f = g
        current = terms(f, cfg, entropy=True)
        if k % cfg.output_every == 0 or k == n_steps:
            emit(f, k * dt, current)
    return RunResult(cfg, records, states, f, j_params, c_max, dt, n_steps, unstable, frequencies, gains)
