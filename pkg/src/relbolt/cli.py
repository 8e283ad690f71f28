"""Command-line front end.

Exit codes: 0 success, 1 a check or comparison failed, 2 configuration or
usage error, 3 numerical failure (non-finite state, fit not converged).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .equilibrium import FitError, MomentSet, bessel_k, bessel_k_scaled, fit_juttner, juttner_grid, moments
from .grid import GridFunction, MomentumGrid
from .initial import DEFAULTS as INIT_DEFAULTS
from .initial import VECTOR_KEYS, InitialCondition
from .io import CsvWriter, write_state
from .solver import ConfigError, NumericalAbort, SimConfig, run
from .verify import (
    CARLEMAN_TOLERANCE,
    CARLEMAN_Z,
    UnknownCheck,
    carleman_points,
    check_ids,
    compare_gain_evaluators,
    default_scenario,
    list_checks,
    run_check,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

#: ``(section, key) -> SimConfig field``; defaults come from ``SimConfig``.
FIELDS = {
    ("grid", "n_per_axis"): "n_per_axis",
    ("grid", "p_max"): "p_max",
    ("kernel", "c_sigma"): "c_sigma",
    ("quadrature", "n_polar"): "n_polar",
    ("quadrature", "n_azimuth"): "n_azimuth",
    ("quadrature", "interpolation"): "interpolation",
    ("quadrature", "closure"): "closure",
    ("quadrature", "seed"): "seed",
    ("time", "scheme"): "scheme",
    ("time", "dt"): "dt",
    ("time", "t_end"): "t_end",
    ("time", "time_unit"): "time_unit",
    ("time", "conserve_projection"): "conserve_projection",
    ("diagnostics", "rho"): "rho",
    ("diagnostics", "output_every"): "output_every",
}

DEFAULT_OUTPUT = "relbolt-output"
SECTIONS = ("grid", "kernel", "quadrature", "time", "init", "diagnostics", "output")


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    output: Path


class ScenarioError(ValueError):
    """Configuration problem; the message names the offending key."""


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ScenarioError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _init_value(key: str, raw: str):
    if key in VECTOR_KEYS:
        parts = [p for p in raw.replace(",", " ").split()]
        try:
            vec = tuple(float(p) for p in parts)
        except ValueError:
            raise ScenarioError(f"init.{key}: cannot parse {raw!r} as a 3-vector") from None
        if len(vec) != 3:
            raise ScenarioError(f"init.{key}: expected 3 components, got {len(vec)}")
        return vec
    if key in ("base", "path"):
        return raw.strip()
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"init.{key}: cannot parse {raw!r} as float") from None


def parse_scenario(text: str = "", overrides=(), base_dir: Path | None = None) -> Scenario:
    """Scenario from INI ``text`` plus ``section.key=value`` overrides.

    Unknown sections and keys are rejected by name, and every
    :class:`SimConfig` invariant is enforced here.  Relative ``init.path``
    and ``output.directory`` values resolve against ``base_dir``.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"config: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ScenarioError(f"override {item!r}: expected section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value)

    for section in parser.sections():
        if section not in SECTIONS:
            raise ScenarioError(f"{section}: unknown section (expected one of {', '.join(SECTIONS)})")

    defaults = SimConfig()
    kwargs = {}
    for section in parser.sections():
        if section in ("init", "output"):
            continue
        for name, raw in parser.items(section):
            field = FIELDS.get((section, name))
            if field is None:
                raise ScenarioError(f"{section}.{name}: unknown key")
            kwargs[field] = _convert(f"{section}.{name}", raw, getattr(defaults, field))

    if parser.has_section("init"):
        items = dict(parser.items("init"))
        kind = items.pop("kind", defaults.init.kind)
        if kind not in INIT_DEFAULTS:
            raise ScenarioError(f"init.kind: unknown kind {kind!r} (expected one of {', '.join(INIT_DEFAULTS)})")
        params = {k: _init_value(k, v) for k, v in items.items()}
        if kind == "file" and "path" in params and base_dir is not None:
            params["path"] = str((base_dir / params["path"]).resolve())
        try:
            kwargs["init"] = InitialCondition(kind, params)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None

    output = Path(DEFAULT_OUTPUT)
    if parser.has_section("output"):
        for name, raw in parser.items("output"):
            if name != "directory":
                raise ScenarioError(f"output.{name}: unknown key")
            output = Path(raw.strip())
    if base_dir is not None and not output.is_absolute():
        output = base_dir / output

    try:
        config = SimConfig(**kwargs)
    except ConfigError as exc:
        raise ScenarioError(str(exc)) from None
    return Scenario(config, output)


def load_scenario(path: str | None, overrides=()) -> Scenario:
    if path is None:
        return parse_scenario("", overrides)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"config: cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, overrides, base_dir=p.resolve().parent)


def keys_help() -> str:
    """Every configuration key with its default."""
    d = SimConfig()
    lines = ["configuration keys (INI sections; defaults shown):"]
    current = None
    for (section, name), field in FIELDS.items():
        if section != current:
            lines.append(f"  [{section}]")
            current = section
        value = getattr(d, field)
        lines.append(f"    {name} = {str(value).lower() if isinstance(value, bool) else value}")
    lines.append("  [init]")
    lines.append(f"    kind = {d.init.kind}   (one of: {', '.join(INIT_DEFAULTS)})")
    for kind, params in INIT_DEFAULTS.items():
        for name, value in params.items():
            shown = ", ".join(str(c) for c in value) if isinstance(value, tuple) else value
            lines.append(f"    {name} = {shown}   ({kind})")
    lines.append("    truncated also takes the parameters of its base kind")
    lines.append("  [output]")
    lines.append(f"    directory = {DEFAULT_OUTPUT}")
    lines.append("")
    lines.append("environment: RELBOLT_THREADS caps the worker threads (0 = all cores)")
    return "\n".join(lines)


def _err(msg: str) -> None:
    print(f"relbolt: {msg}", file=sys.stderr)


def set_threads(env=os.environ) -> None:
    """Apply ``RELBOLT_THREADS`` to the numba pool."""
    raw = env.get("RELBOLT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"RELBOLT_THREADS: cannot parse {raw!r} as int") from None
    if n < 0:
        raise ScenarioError("RELBOLT_THREADS: must be nonnegative")
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(limit if n == 0 else min(n, limit))


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config, args.set)
    out = Path(args.output) if args.output else scenario.output
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "diagnostics.csv"
    state_path = out / "final_state.bin"
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        with CsvWriter(csv_path) as writer:
            try:
                result = run(scenario.config, on_record=writer.write, keep_states=False, dump_dir=out)
            except NumericalAbort as exc:
                where = f"; last good state in {exc.dump}" if exc.dump else ""
                _err(f"numerical abort: {exc}{where}")
                return EXIT_NUMERIC
    write_state(state_path, result.final, scenario.config.rho, t=result.records[-1].t, C=result.c_max)
    last = result.records[-1]
    print(
        json.dumps(
            {
                "steps": result.n_steps,
                "dt": result.dt,
                "C": result.c_max,
                "t_end": last.t,
                "H": last.H,
                "dist_l1_J": last.dist_l1_to_J,
                "csv": str(csv_path),
                "state": str(state_path),
            }
        )
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    ids = check_ids() if args.checks == ["all"] else args.checks
    unknown = [c for c in ids if c not in check_ids()]
    if unknown:
        _err(f"unknown check id {unknown[0]!r}; available: {', '.join(check_ids())}")
        return EXIT_CONFIG
    scenario = load_scenario(args.scenario).config if args.scenario else default_scenario()
    ok = True
    for check_id in ids:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_check(check_id, args.samples, args.seed, scenario)
        print(report.to_json(), flush=True)
        ok &= report.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_list(args) -> int:
    for info in list_checks():
        print(json.dumps({"check_id": info.check_id, "kind": info.kind, "trajectory": info.trajectory, "statement": info.statement}))
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.moments is not None:
        m = MomentSet(*args.moments)
    else:
        scenario = load_scenario(args.config, args.set)
        m = moments(scenario.config.init.build(scenario.config.grid))
    try:
        m.check_physical()
    except ValueError as exc:
        _err(f"moments: {exc}")
        return EXIT_CONFIG
    try:
        params = fit_juttner(m)
    except FitError as exc:
        _err(f"fit: {exc} (residual {exc.residual:.3g})")
        return EXIT_NUMERIC
    print(json.dumps(params.to_dict()))
    return EXIT_OK


def _coarsened(f: GridFunction) -> GridFunction:
    """``f`` resampled on a grid of half the resolution, then back onto its own grid."""
    grid = f.grid
    coarse = MomentumGrid(max(grid.n_per_axis // 2, 2), grid.p_max)
    g = GridFunction(coarse, np.maximum(f(coarse.nodes), 0.0))
    return GridFunction(grid, np.maximum(g(grid.nodes), 0.0))


def cmd_carleman_compare(args) -> int:
    scenario = load_scenario(args.config, args.set)
    cfg = scenario.config
    grid = cfg.grid
    f0 = cfg.init.build(grid)
    if args.state == "initial":
        f = f0
    elif args.state == "juttner":
        f = juttner_grid(grid, fit_juttner(moments(f0)))
    else:
        f = GridFunction.zeros(grid)
    rng = np.random.default_rng([cfg.seed if args.seed is None else args.seed, 5])
    pts = carleman_points(f, args.points, rng)
    seed = int(rng.integers(2**32))
    cmp = compare_gain_evaluators(f, pts, seed, cfg.kernel, n_samples=args.samples)
    if args.mismatch:
        # negative control: the Carleman side sees f at half the resolution
        from .carleman import q_gain_carleman

        carl = np.atleast_1d(q_gain_carleman(_coarsened(f), pts, cfg.kernel))
        cmp = type(cmp)(cmp.points, cmp.com, carl, cmp.mollified, cmp.stderr)
    header = f"{'px':>7} {'py':>7} {'pz':>7} {'q_gain':>13} {'carleman':>13} {'mollified':>13} {'stderr':>10} {'spread':>8} {'z':>6}"
    print(header)
    for p, a, b, c, se, sp, z in zip(cmp.points, cmp.com, cmp.carleman, cmp.mollified, cmp.stderr, cmp.spread, cmp.z_scores):
        print(f"{p[0]:7.3f} {p[1]:7.3f} {p[2]:7.3f} {a:13.6e} {b:13.6e} {c:13.6e} {se:10.3e} {sp:8.4f} {z:6.2f}")
    bad = int(cmp.failures().sum())
    worst = float(cmp.spread.max()) if len(pts) else 0.0
    print(f"# points {len(pts)}, max spread {worst:.4f} (tolerance {CARLEMAN_TOLERANCE}), failures {bad} (z limit {CARLEMAN_Z})")
    return EXIT_OK if bad == 0 else EXIT_FAIL


def cmd_bessel(args) -> int:
    value = bessel_k_scaled(args.order, args.z) if args.scaled else bessel_k(args.order, args.z)
    print(format(value, ".17g"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="relbolt",
        description="Homogeneous relativistic Boltzmann solver and operator-estimate checks.",
        epilog=keys_help(),
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, required=False):
        p.add_argument("config", nargs=None if required else "?", help="INI scenario file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")

    p = sub.add_parser("simulate", help="run a scenario; writes diagnostics.csv and final_state.bin", epilog=keys_help(), formatter_class=fmt)
    scenario_args(p)
    p.add_argument("--output", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run registered checks, one JSON report per line", formatter_class=fmt)
    p.add_argument("checks", nargs="+", help="check ids or 'all'")
    p.add_argument("--samples", type=int, default=None, help="samples per check (default: per-check default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", help="INI scenario for trajectory checks (default: truncated two-bump)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("list-checks", help="describe the check registry")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("fit", help="fit Juttner parameters to moments", epilog=keys_help(), formatter_class=fmt)
    scenario_args(p)
    p.add_argument("--moments", type=float, nargs=5, metavar=("I0", "T00", "T10", "T20", "T30"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("carleman-compare", help="compare the three gain evaluators", epilog=keys_help(), formatter_class=fmt)
    scenario_args(p)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=None, help="default: quadrature.seed")
    p.add_argument("--samples", type=int, default=100_000, help="Monte-Carlo samples per point")
    p.add_argument("--state", choices=("initial", "juttner", "zero"), default="initial")
    p.add_argument("--mismatch", action="store_true", help="negative control: Carleman side at half resolution")
    p.set_defaults(func=cmd_carleman_compare)

    p = sub.add_parser("bessel", help="modified Bessel function K_j(z)")
    p.add_argument("order", type=int, choices=(0, 1, 2))
    p.add_argument("z", type=float)
    p.add_argument("--scaled", action="store_true", help="print exp(z) K_j(z)")
    p.set_defaults(func=cmd_bessel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    # numba probes an optional threading backend and warns when it is too old
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    try:
        set_threads()
        return args.func(args)
    except (ScenarioError, UnknownCheck) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except ValueError as exc:
        _err(f"invalid input: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
