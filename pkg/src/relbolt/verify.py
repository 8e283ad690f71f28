"""Registry of randomized and trajectory checks of the operator estimates.

Every check returns a :class:`CheckReport`.  Inequality checks count
violations beyond round-off slack; constant checks estimate the implicit
constant of a ``<~`` statement and pass when it is finite and moves less
than ``STABILITY`` when the sample count (or ``t_end``, or the mollifier
width) is doubled.  Reports are deterministic in ``(check_id, samples,
seed, scenario)`` apart from ``elapsed``.

Trajectory checks share one run per scenario: the scenario is integrated to
``2 t_end`` once and the ``t_end`` run is its prefix (the step is fixed by
the initial collision frequency, so the prefix is bit-identical to a run
stopped at ``t_end``).
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .carleman import q_gain_carleman, q_gain_mollified
from .collision import ScatterKernel, collision_terms, post_collision
from .equilibrium import JuttnerParams, fit_juttner, juttner_eval, juttner_grid, moments
from .grid import GridFunction, MomentumGrid
from .initial import InitialCondition
from .kinematics import (
    com_boost,
    g_relative,
    lift,
    minkowski_dot,
    random_momenta,
    s_invariant,
)
from .quadrature import SphereQuadrature
from .solver import DiscretizationBudget, RunResult, SimConfig, run

#: Round-off slack on normalized inequality margins.
SLACK = 1e-10

#: Largest relative move of a fitted constant under doubling.
STABILITY = 0.10

#: Largest relative move of the trajectory sup-norm under doubling ``t_end``.
LINF_STABILITY = 0.05

#: Agreement required between the two deterministic gain evaluators.
CARLEMAN_TOLERANCE = 0.05

#: Monte-Carlo agreement, in standard errors.
CARLEMAN_Z = 3.0

#: Polynomial weight exponent of the polynomial-bound check.
POLY_M0 = 2

GRID_DOMAIN = "grid-representable f only (nonnegative node values on a finite momentum box)"


class UnknownCheck(KeyError):
    """No check is registered under the given id."""


class ScenarioRequired(ValueError):
    """A trajectory check was run without a scenario."""


@dataclass(frozen=True)
class CheckReport:
    check_id: str
    samples: int
    violations: int
    worst_margin: float
    fitted_constant: float
    elapsed: float
    verdict: str
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> str:
        """One JSON object; non-finite numbers become ``null``."""
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return json.dumps(d)


@dataclass(frozen=True)
class CheckInfo:
    check_id: str
    statement: str
    kind: str
    default_samples: int
    trajectory: bool


@dataclass(frozen=True)
class _Outcome:
    samples: int
    violations: int
    worst_margin: float
    fitted_constant: float
    passed: bool
    note: str = ""


_REGISTRY: dict[str, tuple[CheckInfo, Callable]] = {}


def _register(check_id, statement, kind, default_samples, trajectory=False):
    def wrap(fn):
        _REGISTRY[check_id] = (CheckInfo(check_id, statement, kind, default_samples, trajectory), fn)
        return fn

    return wrap


def list_checks() -> list[CheckInfo]:
    """The fixed registry, in run order."""
    return [info for info, _ in _REGISTRY.values()]


def check_ids() -> list[str]:
    return list(_REGISTRY)


def default_scenario() -> SimConfig:
    """Truncated two-bump data: the approximation scheme with strictly positive data."""
    return SimConfig(init=InitialCondition("truncated", {"eps": 1e-3, "base": "two_bump"}))


def check_stream(seed: int, check_id: str) -> np.random.Generator:
    """Private random stream of a check, fixed by ``(seed, check_id)``."""
    return np.random.default_rng([int(seed), zlib.crc32(check_id.encode())])


def run_check(check_id: str, samples: int | None = None, seed: int = 0, scenario: SimConfig | None = None) -> CheckReport:
    """Run one registered check.

    ``samples`` defaults to the check's own default; trajectory checks
    ignore it and report the number of (node, time) pairs inspected.
    """
    if check_id not in _REGISTRY:
        raise UnknownCheck(check_id)
    info, fn = _REGISTRY[check_id]
    if info.trajectory and scenario is None:
        raise ScenarioRequired(f"{check_id} needs a scenario")
    n = info.default_samples if samples is None else int(samples)
    if n < 1:
        raise ValueError("samples must be positive")
    start = time.perf_counter()
    rng = check_stream(seed, check_id)
    out = fn(n, rng, scenario) if info.trajectory or check_id in _SCENARIO_AWARE else fn(n, rng)
    elapsed = time.perf_counter() - start
    return CheckReport(
        check_id=check_id,
        samples=int(out.samples),
        violations=int(out.violations),
        worst_margin=float(out.worst_margin) + 0.0,  # drops a negative zero
        fitted_constant=float(out.fitted_constant),
        elapsed=float(elapsed),
        verdict="pass" if out.passed else "fail",
        note=out.note,
    )


def _rel_change(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def _pairs(rng, n):
    p = random_momenta(rng, n)
    q = random_momenta(rng, n)
    return lift(p), lift(q)


def _chunks(n, size=100_000):
    done = 0
    while done < n:
        m = min(size, n - done)
        yield m
        done += m


def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------- kinematic


@_register(
    "coercive_g",
    "two-sided bound |p - q| / sqrt(p0 q0) <= g(p, q) <= |p - q| on the mass shell",
    "inequality",
    1_000_000,
)
def _coercive_g(n, rng):
    worst = np.inf
    lower_const = np.inf
    violations = 0
    for m in _chunks(n):
        P, Q = _pairs(rng, m)
        d = np.linalg.norm(P[:, 1:] - Q[:, 1:], axis=1)
        g = g_relative(P, Q)
        ok = d > 0
        ratio = g[ok] / d[ok]
        floor = 1.0 / np.sqrt(P[ok, 0] * Q[ok, 0])
        margin = np.minimum(ratio - floor, 1.0 - ratio)
        violations += int(np.sum(margin < -SLACK))
        worst = min(worst, float(margin.min()))
        lower_const = min(lower_const, float((ratio / floor).min()))
    return _Outcome(n, violations, worst, lower_const, violations == 0, "fitted_constant = min g sqrt(p0 q0) / |p - q|")


@_register(
    "lorentz_rows",
    "first row of the center-of-momentum boost: |L^0_nu| <= sqrt(2) (p0 q0)^(1/2)",
    "inequality",
    1_000_000,
)
def _lorentz_rows(n, rng):
    worst = np.inf
    largest = 0.0
    violations = 0
    for m in _chunks(n):
        P, Q = _pairs(rng, m)
        lam = com_boost(P, Q)
        bound = math.sqrt(2.0) * np.sqrt(P[:, 0] * Q[:, 0])
        ratio = np.abs(lam[:, 0, :]).max(axis=1) / bound
        violations += int(np.sum(ratio > 1.0 + SLACK))
        worst = min(worst, float((1.0 - ratio).min()))
        largest = max(largest, float(ratio.max()))
    return _Outcome(n, violations, worst, largest, violations == 0, "fitted_constant = max |L^0_nu| / (sqrt(2) (p0 q0)^(1/2))")


def _key_lemma_ratios(rng, n):
    out = []
    for m in _chunks(n):
        P, Q = _pairs(rng, m)
        omega = _unit_vectors(rng, m)
        a = lift(random_momenta(rng, m))
        lam = com_boost(P, Q)
        g = g_relative(P, Q)
        s = s_invariant(P, Q)
        A = np.concatenate([0.5 * np.sqrt(s)[:, None], 0.5 * g[:, None] * omega], axis=1)
        b = np.einsum("nij,nj->ni", lam, a)
        # re-project b onto the mass shell to remove rounding in the boost
        b[:, 0] = np.sqrt(1.0 + np.sum(b[:, 1:] ** 2, axis=1))
        lhs = g_relative(A, b)
        rhs = np.linalg.norm(A[:, 1:] - b[:, 1:], axis=1) / (np.sqrt(a[:, 0]) * np.sqrt(P[:, 0] * Q[:, 0]))
        ok = rhs > 0
        out.append(lhs[ok] / rhs[ok])
    return np.concatenate(out)


@_register(
    "key_lemma",
    "g(A, L a) >~ |g omega / 2 - L a| / (sqrt(a0) (p0 q0)^(1/2)) with A = (sqrt(s)/2, g omega / 2)",
    "constant",
    100_000,
)
def _key_lemma(n, rng):
    first = _key_lemma_ratios(rng, n)
    second = _key_lemma_ratios(rng, n)
    c_n = float(first.min())
    c_2n = min(c_n, float(second.min()))
    change = _rel_change(c_n, c_2n)
    passed = c_2n > 0 and math.isfinite(c_2n) and change < STABILITY
    return _Outcome(
        2 * n,
        0 if passed else 1,
        c_2n,
        c_2n,
        passed,
        f"min LHS/RHS at n: {c_n:.6g}, at 2n: {c_2n:.6g}, change {change:.3g}",
    )


@_register(
    "collision_invariants",
    "the collision map conserves particle number, energy and momentum and preserves s and g",
    "inequality",
    100_000,
)
def _collision_invariants(n, rng):
    p = random_momenta(rng, n)
    q = random_momenta(rng, n)
    # head-on pairs exercise the |p + q| -> 0 branch
    k = max(n // 20, 2)
    q[:k] = -p[:k]
    q[k : 2 * k] = -p[k : 2 * k] + 1e-13 * _unit_vectors(rng, k)
    omega = _unit_vectors(rng, n)
    P, Q = lift(p), lift(q)
    Pp, Qp = post_collision(P, Q, omega)
    scale = P[:, 0] + Q[:, 0]
    err_mom = np.abs((Pp + Qp) - (P + Q)).max(axis=1) / scale
    # the post-collision energies must also sit on the mass shell
    err_shell = np.maximum(
        np.abs(Pp[:, 0] - np.sqrt(1.0 + np.sum(Pp[:, 1:] ** 2, axis=1))),
        np.abs(Qp[:, 0] - np.sqrt(1.0 + np.sum(Qp[:, 1:] ** 2, axis=1))),
    ) / scale
    s, sp = s_invariant(P, Q), s_invariant(Pp, Qp)
    g, gp = g_relative(P, Q), g_relative(lift(Pp[:, 1:]), lift(Qp[:, 1:]))
    err_s = np.abs(sp - s) / s
    err_g = np.abs(gp - g) / np.maximum(g, 1e-300)
    err = np.max(np.stack([err_mom, err_shell, err_s, err_g]), axis=0)
    tol = 1e-9
    violations = int(np.sum(err > tol))
    return _Outcome(n, violations, float(tol - err.max()), float(err.max()), violations == 0, f"tolerance {tol:g} relative; {2 * k} near head-on pairs")


# ---------------------------------------------------------------- operator


#: Coarse grid for the operator estimates over random grid functions.
ESTIMATE_GRID = MomentumGrid(8, 4.0)

#: Random grid functions per operator-estimate check.
ESTIMATE_FUNCTIONS = 4


def _random_states(rng, grid, count):
    """Sums of two Juttner bumps with random density, temperature and drift."""
    out = []
    for _ in range(count):
        values = np.zeros(grid.shape)
        for _ in range(2):
            params = JuttnerParams.from_velocity(rng.uniform(0.2, 1.0), rng.uniform(0.3, 1.5), random_momenta(rng, 1, 0.7)[0])
            values += juttner_eval(params, grid.nodes)
        out.append(GridFunction(grid, values))
    return out


def _l1_weighted(f: GridFunction, power: float) -> float:
    return f.integrate(f.grid.energies**power)


def _cell_polar_integral(gain: GridFunction, a_vec, a4, center, h, sq, rad_t, rad_w):
    """``int_cell sqrt(p0) / g(p, a) Q+ dp`` in polar coordinates about ``a``."""
    dirs = sq.nodes
    # distance from a to the cell boundary along each direction
    lo = center - 0.5 * h - a_vec
    hi = center + 0.5 * h - a_vec
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(dirs > 0, hi / dirs, np.where(dirs < 0, lo / dirs, np.inf))
    reach = t_hi.min(axis=1)
    r = reach[:, None] * rad_t[None, :]
    pts = a_vec + r[..., None] * dirs[:, None, :]
    P = lift(pts)
    g = g_relative(P, np.broadcast_to(a4, P.shape))
    q = gain(pts)
    # r^2 / g stays bounded as r -> 0
    integrand = np.sqrt(P[..., 0]) / g * q * r**2
    return float(np.sum(sq.weights[:, None] * rad_w[None, :] * reach[:, None] * integrand))


def _potential_ratios(rng, states, gains, n_a):
    grid = ESTIMATE_GRID
    h = grid.spacing
    h3 = grid.cell_volume
    nodes = grid.nodes
    sq = SphereQuadrature(16, 16)
    t, w = np.polynomial.legendre.leggauss(8)
    rad_t, rad_w = 0.5 * (t + 1.0), 0.5 * w
    out = []
    for f, gain in zip(states, gains):
        norm = _l1_weighted(f, 1.0) ** 2
        a_vecs = random_momenta(rng, n_a, 1.5)
        for a_vec in a_vecs:
            a4 = lift(a_vec)
            weight = np.sqrt(grid.energies) / g_relative(lift(nodes), np.broadcast_to(a4, nodes.shape[:-1] + (4,)))
            integrand = weight * gain.values
            total = 0.0
            if np.all(np.abs(a_vec) < grid.p_max):
                idx = grid.index_of(a_vec)
                integrand = integrand.copy()
                integrand[idx] = 0.0
                total += _cell_polar_integral(gain, a_vec, a4, nodes[idx], h, sq, rad_t, rad_w)
            total += float(integrand.sum() * h3)
            out.append(total / (math.sqrt(a4[0]) * norm))
    return np.array(out)


@_register(
    "potential_estimate",
    "int sqrt(p0) / g(p, a) Q+(f, f) dp <~ sqrt(a0) |f|^2 in L1 with weight p0",
    "constant",
    200,
)
def _potential_estimate(n, rng):
    states = _random_states(rng, ESTIMATE_GRID, ESTIMATE_FUNCTIONS)
    gains = [GridFunction(f.grid, collision_terms(f).gain) for f in states]
    per = max(n // ESTIMATE_FUNCTIONS, 1)
    first = _potential_ratios(rng, states, gains, per)
    second = _potential_ratios(rng, states, gains, per)
    c_n = float(first.max())
    c_2n = max(c_n, float(second.max()))
    change = _rel_change(c_n, c_2n)
    passed = math.isfinite(c_2n) and c_2n > 0 and change < STABILITY
    return _Outcome(
        2 * per * ESTIMATE_FUNCTIONS,
        0 if passed else 1,
        STABILITY - change,
        c_2n,
        passed,
        f"sup ratio at n: {c_n:.6g}, at 2n: {c_2n:.6g}; domain: {GRID_DOMAIN}",
    )


#: Sub-cells per grid cell along each axis for the hypersurface integral.
SURFACE_REFINE = 12


def _surface_points(grid):
    m = grid.n_per_axis * SURFACE_REFINE
    hs = 2.0 * grid.p_max / m
    axis = -grid.p_max + (np.arange(m) + 0.5) * hs
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts, hs**3


def _surface_ratios(rng, states, fine_gains, pts, dv, n_a, widths):
    p0 = np.sqrt(1.0 + np.sum(pts * pts, axis=1))
    out = np.zeros((n_a * len(states), len(widths)))
    row = 0
    for f, qg in zip(states, fine_gains):
        norm = _l1_weighted(f, 0.5) ** 2
        weight = np.sqrt(p0) * qg * dv
        for _ in range(n_a):
            a_vec = _unit_vectors(rng, 1)[0] * (0.2 + rng.exponential(2.0))
            a0 = np.linalg.norm(a_vec) * rng.uniform(-0.95, 0.95)
            b = lift(random_momenta(rng, 1, 1.0)[0])
            a4 = np.concatenate([[a0], a_vec])
            x = -a0 * (p0 - b[0]) + (pts - b[1:]) @ a_vec
            norm_a = math.sqrt(minkowski_dot(a4, a4))
            for k, w in enumerate(widths):
                eps = w * np.linalg.norm(a_vec)
                delta = np.exp(-0.5 * (x / eps) ** 2) / (math.sqrt(2.0 * math.pi) * eps)
                out[row, k] = float(weight @ delta) * norm_a / norm
            row += 1
    return out


@_register(
    "hypersurface_estimate",
    "int sqrt(p0) Q+(f, f) delta(a.(p - b)) dp <~ |f|^2 in L1 with weight sqrt(p0) / sqrt(a.a) for space-like a",
    "constant",
    48,
)
def _hypersurface_estimate(n, rng):
    grid = ESTIMATE_GRID
    states = _random_states(rng, grid, ESTIMATE_FUNCTIONS)
    pts, dv = _surface_points(grid)
    fine = []
    for f in states:
        gain = GridFunction(grid, collision_terms(f).gain)
        fine.append(gain(pts))
    h = grid.spacing
    widths = (h, h / 2, h / 4)
    per = max(n // ESTIMATE_FUNCTIONS, 1)
    first = _surface_ratios(rng, states, fine, pts, dv, per, widths)
    second = _surface_ratios(rng, states, fine, pts, dv, per, widths)
    sup_n = first.max(axis=0)
    sup_2n = np.maximum(sup_n, second.max(axis=0))
    c = float(sup_2n[-1])
    sample_change = _rel_change(float(sup_n[-1]), c)
    eps_change = _rel_change(float(sup_2n[-2]), c)
    d1 = sup_2n[0] - sup_2n[1]
    d2 = sup_2n[1] - sup_2n[2]
    trend = d1 / d2 if d2 != 0 else float("inf")
    passed = math.isfinite(c) and c > 0 and sample_change < STABILITY and eps_change < STABILITY
    return _Outcome(
        2 * per * ESTIMATE_FUNCTIONS,
        0 if passed else 1,
        STABILITY - max(sample_change, eps_change),
        c,
        passed,
        f"sup at eps, eps/2, eps/4 (eps = |a| h): {sup_2n[0]:.6g}, {sup_2n[1]:.6g}, {sup_2n[2]:.6g}; "
        f"Richardson ratio {trend:.3g}; sample-doubling change {sample_change:.3g}; domain: {GRID_DOMAIN}",
    )


# ---------------------------------------------------------------- carleman


def carleman_points(f: GridFunction, count: int, rng) -> np.ndarray:
    """``count`` distinct nodes with ``f >= 1e-2 max f``, in random order."""
    flat = f.values.reshape(-1)
    eligible = np.flatnonzero(flat >= 1e-2 * flat.max())
    pick = rng.choice(eligible, size=min(count, eligible.size), replace=False)
    return f.grid.flat_nodes()[np.sort(pick)]


@dataclass(frozen=True)
class CarlemanComparison:
    points: np.ndarray
    com: np.ndarray
    carleman: np.ndarray
    mollified: np.ndarray
    stderr: np.ndarray

    @property
    def spread(self) -> np.ndarray:
        """Relative gap between the two deterministic evaluators."""
        scale = np.maximum(np.abs(self.com), np.abs(self.carleman))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(scale > 0, np.abs(self.com - self.carleman) / scale, 0.0)

    @property
    def z_scores(self) -> np.ndarray:
        """Monte-Carlo distance, in standard errors, to the farther deterministic value."""
        gap = np.maximum(np.abs(self.mollified - self.com), np.abs(self.mollified - self.carleman))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.stderr > 0, gap / self.stderr, np.where(gap > 0, np.inf, 0.0))

    def failures(self, tolerance: float = CARLEMAN_TOLERANCE, z: float = CARLEMAN_Z) -> np.ndarray:
        return (self.spread > tolerance) | (self.z_scores > z)


def compare_gain_evaluators(
    f: GridFunction,
    points: np.ndarray,
    seed: int,
    kernel: ScatterKernel | None = None,
    carleman_spacing: float | None = None,
    n_samples: int = 100_000,
) -> CarlemanComparison:
    """Gain at ``points`` from the center-of-momentum, Carleman and Monte-Carlo evaluators."""
    kernel = kernel or ScatterKernel()
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    com = np.atleast_1d(collision_terms(f, points, kernel).gain)
    carl = np.atleast_1d(q_gain_carleman(f, points, kernel, spacing=carleman_spacing))
    seeds = np.random.SeedSequence(seed).generate_state(len(points))
    mc = np.array([q_gain_mollified(f, p, kernel, n_samples=n_samples, seed=int(s)) for p, s in zip(points, seeds)])
    if mc.size == 0:
        mc = np.zeros((0, 2))
    return CarlemanComparison(points, com, carl, mc[:, 0], mc[:, 1])


_SCENARIO_AWARE = {"carleman_equiv"}


@_register(
    "carleman_equiv",
    "gain operator: center-of-momentum form, Carleman hypersurface form and mollified Monte-Carlo agree",
    "inequality",
    20,
)
def _carleman_equiv(n, rng, scenario):
    scenario = scenario or default_scenario()
    grid = scenario.grid
    kernel = scenario.kernel
    f = scenario.init.build(grid)
    j = juttner_grid(grid, fit_juttner(moments(f)))
    violations = 0
    spreads, zs = [], []
    for state in (j, f):
        pts = carleman_points(state, n, rng)
        cmp = compare_gain_evaluators(state, pts, int(rng.integers(2**32)), kernel)
        violations += int(cmp.failures().sum())
        spreads.append(cmp.spread.max())
        zs.append(cmp.z_scores.max())
    worst_spread = float(max(spreads))
    worst_z = float(max(zs))
    margin = min(CARLEMAN_TOLERANCE - worst_spread, (CARLEMAN_Z - worst_z) / CARLEMAN_Z * CARLEMAN_TOLERANCE)
    return _Outcome(
        2 * n,
        violations,
        margin,
        worst_spread,
        violations == 0,
        f"f = fitted Juttner and the scenario's initial state; max spread {worst_spread:.4g} "
        f"(tolerance {CARLEMAN_TOLERANCE}), max Monte-Carlo z {worst_z:.3g} (limit {CARLEMAN_Z})",
    )


# ---------------------------------------------------------------- trajectory


@dataclass(eq=False)
class Trajectory:
    """A scenario run to ``2 t_end`` with its ``t_end`` prefix and budget."""

    scenario: SimConfig
    doubled: RunResult
    base: RunResult
    budget: DiscretizationBudget


_TRAJECTORIES: dict[str, Trajectory] = {}


def trajectory(scenario: SimConfig) -> Trajectory:
    """Cached run of ``scenario`` to twice its ``t_end``."""
    key = json.dumps(scenario.to_dict(), sort_keys=True)
    if key not in _TRAJECTORIES:
        doubled = run(scenario.with_(t_end=2.0 * scenario.t_end))
        t_end = scenario.t_end / doubled.c_max if scenario.time_unit == "collision" else scenario.t_end
        base = doubled.prefix(t_end)
        if doubled.j_params is None:
            budget = DiscretizationBudget(0.0, 0.0, 0.0)
        else:
            budget = DiscretizationBudget.measure(scenario, doubled.j_params)
        _TRAJECTORIES[key] = Trajectory(scenario, doubled, base, budget)
    return _TRAJECTORIES[key]


def clear_cache() -> None:
    _TRAJECTORIES.clear()


def _node_times(r: RunResult) -> int:
    return len(r.records) * r.config.grid.size


def _sup_check(values_base: float, values_doubled: float, tolerance: float, label: str, samples: int):
    change = _rel_change(values_base, values_doubled)
    passed = math.isfinite(values_doubled) and change < tolerance
    return _Outcome(
        samples,
        0 if passed else 1,
        tolerance - change,
        values_doubled,
        passed,
        f"{label}: {values_base:.8g} to t_end, {values_doubled:.8g} to 2 t_end, change {change:.3g} (limit {tolerance})",
    )


def _l_ratio(r: RunResult) -> tuple[float, float]:
    e = r.config.grid.energies
    ratios = [L / e for L in r.frequencies]
    return float(min(x.min() for x in ratios)), float(max(x.max() for x in ratios))


@_register(
    "L_bounds",
    "collision frequency bounds C_l p0 <= L f(p) <= C_u p0 along a trajectory",
    "constant",
    1,
    trajectory=True,
)
def _L_bounds(n, rng, scenario):
    tr = trajectory(scenario)
    lo_b, hi_b = _l_ratio(tr.base)
    lo_d, hi_d = _l_ratio(tr.doubled)
    change = max(_rel_change(lo_b, lo_d), _rel_change(hi_b, hi_d))
    passed = 0 < lo_d <= hi_d < math.inf and change < STABILITY
    return _Outcome(
        _node_times(tr.doubled),
        0 if passed else 1,
        STABILITY - change,
        lo_d,
        passed,
        f"C_l = {lo_d:.6g}, C_u = {hi_d:.6g} to 2 t_end (to t_end: {lo_b:.6g}, {hi_b:.6g}); "
        "grid closure: collisions leaving the box are not counted",
    )


@_register(
    "qplus_uniform",
    "uniform bound of the gain term max over (p, t) of Q+(f(t), f(t))(p)",
    "constant",
    1,
    trajectory=True,
)
def _qplus_uniform(n, rng, scenario):
    tr = trajectory(scenario)
    base = max(float(g.max()) for g in tr.base.gains)
    doubled = max(float(g.max()) for g in tr.doubled.gains)
    return _sup_check(base, doubled, STABILITY, "max Q+", _node_times(tr.doubled))


@_register(
    "linf_propagation",
    "uniform bound sup over t of the L-infinity norm of f(t)",
    "constant",
    1,
    trajectory=True,
)
def _linf_propagation(n, rng, scenario):
    tr = trajectory(scenario)
    base = float(tr.base.column("linf").max())
    doubled = float(tr.doubled.column("linf").max())
    return _sup_check(base, doubled, LINF_STABILITY, "sup linf", _node_times(tr.doubled))


def tail_rate(f: GridFunction) -> float:
    """Exponential decay rate of the upper envelope of ``f`` in ``p0``.

    The envelope ``u(e) = max{f(p) : p0 >= e}`` over the nodes inside the
    inscribed ball ``|p| <= p_max`` is fitted by least squares to
    ``log u = c - R e`` over the upper half of its energy range.
    """
    grid = f.grid
    e = grid.energies.reshape(-1)
    v = f.values.reshape(-1)
    inside = np.linalg.norm(grid.flat_nodes(), axis=1) <= grid.p_max
    e, v = e[inside], v[inside]
    order = np.argsort(-e)
    env = np.maximum.accumulate(v[order])
    e_sorted = e[order]
    tail = (e_sorted >= np.median(e_sorted)) & (env > 0)
    if tail.sum() < 2:
        return float("nan")
    slope = np.polyfit(e_sorted[tail], np.log(env[tail]), 1)[0]
    return float(-slope)


#: Envelope rate as a fraction of the initial tail rate.
ENVELOPE_FRACTION = 0.5


@dataclass(frozen=True)
class MaxwellianEnvelope:
    """Initial bound ``C0 exp(-R0 p0)`` and a propagated envelope ``C exp(-R1 p0)``."""

    C0: float
    R0: float
    R1: float
    C: float

    @classmethod
    def fit(cls, states: list, fraction: float = ENVELOPE_FRACTION) -> "MaxwellianEnvelope":
        """``R0`` from :func:`tail_rate` of the first state with ``C0`` tight for it;
        ``R1 = fraction * R0`` and ``C`` the smallest constant for which
        ``f(t) <= C exp(-R1 p0)`` at every node of every state.
        """
        f0 = states[0]
        e = f0.grid.energies
        r0 = tail_rate(f0)
        c0 = float((f0.values * np.exp(r0 * e)).max())
        r1 = fraction * r0
        c = max(float((f.values * np.exp(r1 * e)).max()) for f in states)
        return cls(c0, r0, r1, c)

    def holds(self, f: GridFunction, slack: float = 0.0) -> np.ndarray:
        bound = self.C * (1.0 + slack) * np.exp(-self.R1 * f.grid.energies)
        return f.values <= bound * (1.0 + 1e-12)


@_register(
    "maxwellian_bound",
    "Maxwellian upper bound f(t) <= C exp(-R1 p0) for data bounded by C0 exp(-R0 p0), with 0 < R1 < R0",
    "constant",
    1,
    trajectory=True,
)
def _maxwellian_bound(n, rng, scenario):
    tr = trajectory(scenario)
    env = MaxwellianEnvelope.fit(tr.base.states)
    # the envelope fitted up to t_end must still hold up to 2 t_end
    violations = sum(int((~env.holds(f, STABILITY)).sum()) for f in tr.doubled.states)
    env_d = MaxwellianEnvelope.fit(tr.doubled.states)
    change = _rel_change(env.C, env_d.C)
    passed = violations == 0 and 0 < env.R1 < env.R0 and math.isfinite(env.C)
    return _Outcome(
        _node_times(tr.doubled),
        violations,
        STABILITY - change,
        env.C,
        passed,
        f"R0 = {env.R0:.6g}, C0 = {env.C0:.6g}; R1 = {env.R1:.6g}: C = {env.C:.6g} to t_end, "
        f"{env_d.C:.6g} to 2 t_end (change {change:.3g}, slack {STABILITY})",
    )


@_register(
    "poly_bound",
    f"polynomial upper bound (p0)^m0 f(t) <= C1 with m0 = {POLY_M0}",
    "constant",
    1,
    trajectory=True,
)
def _poly_bound(n, rng, scenario):
    tr = trajectory(scenario)
    w = scenario.grid.energies**POLY_M0

    def sup(r):
        return max(float((w * f.values).max()) for f in r.states)

    c0 = float((tr.base.states[0].values * scenario.grid.energies ** (POLY_M0 + scenario.rho)).max())
    out = _sup_check(sup(tr.base), sup(tr.doubled), STABILITY, "C1", _node_times(tr.doubled))
    return _Outcome(
        out.samples,
        out.violations,
        out.worst_margin,
        out.fitted_constant,
        out.passed,
        out.note + f"; initial C0 = max (p0)^(m0 + rho) f0 = {c0:.6g}",
    )


def entropy_audit(r: RunResult, budget: DiscretizationBudget) -> dict:
    """H-theorem diagnostics of a run against the discretization budget."""
    t = r.times
    H = r.column("H")
    D = r.column("D")
    dist = r.column("dist_l1_to_J")
    dt = np.diff(t)
    h_excess = np.diff(H) - dt * budget.entropy_rate
    integral, allowance = budget.entropy_balance(t, D)
    balance = np.abs(H[0] - H - integral) - allowance
    return {
        "h_increase_violations": int(np.sum(h_excess > 0)),
        "h_worst": float(-h_excess.max()) if h_excess.size else 0.0,
        "negative_D": int(np.sum(D < 0)),
        "balance_violations": int(np.sum(balance > 0)),
        "balance_worst": float(-balance.max()),
        "balance_final": float(H[0] - H[-1] - integral[-1]),
        "allowance_final": float(allowance[-1]),
        "dist": dist,
        "times": t,
    }


def convergence_audit(r: RunResult, budget: DiscretizationBudget, skip_fraction: float = 0.1) -> dict:
    """Distance-to-equilibrium diagnostics: decay ratio and monotonicity after the transient."""
    t = r.times
    dist = r.column("dist_l1_to_J")
    t_end = t[-1]
    late = t >= skip_fraction * t_end
    idx = np.flatnonzero(late)
    rises = np.diff(dist[idx]) - np.diff(t[idx]) * budget.residual_rate
    half = np.flatnonzero(t <= 0.5 * t_end * (1.0 + 1e-9))[-1]
    return {
        "ratio": float(dist[-1] / dist[0]) if dist[0] > 0 else 0.0,
        "rise_violations": int(np.sum(rises > 0)),
        "rise_worst": float(-rises.max()) if rises.size else 0.0,
        "dist_half": float(dist[half]),
        "dist_end": float(dist[-1]),
    }


@_register(
    "htheorem_and_convergence",
    "entropy non-increasing, entropy balance H(0) - H(t) = int D, and decay of the L1 distance to the fitted Juttner",
    "inequality",
    1,
    trajectory=True,
)
def _htheorem_and_convergence(n, rng, scenario):
    tr = trajectory(scenario)
    ent = entropy_audit(tr.base, tr.budget)
    conv = convergence_audit(tr.base, tr.budget)
    decays = conv["dist_end"] < conv["dist_half"]
    violations = ent["h_increase_violations"] + ent["negative_D"] + ent["balance_violations"] + (0 if decays else 1)
    margin = min(ent["h_worst"], ent["balance_worst"], conv["dist_half"] - conv["dist_end"])
    return _Outcome(
        len(tr.base.records),
        violations,
        margin,
        ent["balance_final"],
        violations == 0,
        f"H increases beyond budget: {ent['h_increase_violations']}; D < 0: {ent['negative_D']}; "
        f"balance H(0) - H(t_end) - int D = {ent['balance_final']:.4g} (allowance {ent['allowance_final']:.4g}); "
        f"dist at t_end/2 {conv['dist_half']:.6g}, at t_end {conv['dist_end']:.6g}",
    )


def run_all(samples: int | None = None, seed: int = 0, scenario: SimConfig | None = None, ids=None) -> list[CheckReport]:
    """Run ``ids`` (default: the whole registry) in registry order."""
    scenario = scenario or default_scenario()
    ids = check_ids() if ids is None else list(ids)
    for check_id in ids:
        if check_id not in _REGISTRY:
            raise UnknownCheck(check_id)
    return [run_check(i, samples, seed, scenario) for i in ids]
