"""Command-line front end: run a TOML config, leave artifacts on disk.

Every run writes ``result.json`` (with the resolved config embedded, so a
result can be replayed from the file alone) plus flat CSVs sized for
plotting: ``population.csv``, ``policy.csv``, ``value.csv``, and a
``trace.csv`` whose rows depend on the command.  Figures are rendered next
to the CSVs unless the config turns them off.  Failures of any kind leave
``error.json`` naming the violated check.

Exit codes: 0 success, 2 solver non-convergence, 3 validation failure,
4 config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    apply_overrides,
    build_spec,
    config_payload,
    load_config,
    rebuild_config,
    sweep_builder,
)
from .dp import policy_structure_report, value_iterate
from .errors import (
    ConfigError,
    GridMismatch,
    InfeasibleBudget,
    InvalidParams,
    MarginalMismatch,
    MassSumViolation,
    MaxIterationsExceeded,
    MaxOuterExceeded,
    MfeLabError,
    NonPositiveCapital,
    PointOutOfBounds,
    TransitionEscape,
    UnorderedProbes,
)
from .kernel import build_kernel, check_decreasing_in_s, check_monotone_in_x, ergodicity_probe
from .measure import PopulationState, project_mass
from .mfe import comparative_sweep, consistency_residual, solve_mfe, uniqueness_probe
from .model import aggregator_value, default_probes, validate_model
from .sim import SimConfig, simulate_population

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_VALIDATION = 3
EXIT_CONFIG = 4

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger(__name__)

_CONFIG_ERRORS = (ConfigError, InvalidParams, MassSumViolation)
_VALIDATION_ERRORS = (
    UnorderedProbes, InfeasibleBudget, TransitionEscape, MarginalMismatch,
    GridMismatch, PointOutOfBounds, NonPositiveCapital,
)
_CONVERGENCE_ERRORS = (MaxOuterExceeded, MaxIterationsExceeded)


def _setup_logging():
    level = _LOG_LEVELS.get(os.environ.get("MFE_LAB_LOG", "warn").lower())
    if level is None:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if os.environ.get("MFE_LAB_LOG", "warn").lower() not in _LOG_LEVELS:
        log.warning("unknown MFE_LAB_LOG value %r, using warn",
                    os.environ.get("MFE_LAB_LOG"))


# ---------------------------------------------------------------------------
# serialization helpers

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _jsonable(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, enum.Enum):
        return obj.name
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, PopulationState):
        return {"weights": [float(w) for w in obj.weights]}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    return str(obj)


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _axis_names(grid):
    return ["x1"] if grid.ndim == 1 else [f"x{i + 1}" for i in range(grid.ndim)]


def _grid_rows(grid, columns):
    coords = grid.node_coords()
    for i in range(grid.n):
        row = [i] + [_fmt(c[i]) for c in coords]
        row += [_fmt(col[i]) if isinstance(col[i], (float, np.floating)) else col[i]
                for col in columns]
        yield row


def _write_error(out_dir: Path, exc: Exception, code: int):
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
    }
    violations = getattr(exc, "violations", None)
    if violations:
        payload["violations"] = list(violations)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "error.json", payload)
    except OSError:
        log.error("could not write error.json in %s", out_dir)
    log.error("%s: %s", type(exc).__name__, exc)


# ---------------------------------------------------------------------------
# solve artifacts shared by several commands

def _solve_once(spec, cfg: RunConfig):
    return solve_mfe(
        spec,
        damping=cfg.solver.damping,
        tol=cfg.solver.tol,
        max_outer=cfg.solver.max_outer,
        mode=cfg.solver.mode,
    )


def _solve_payload(spec, cfg: RunConfig, result) -> dict:
    replayed = consistency_residual(
        result.population, spec, dp_tol=min(1e-9, cfg.solver.tol * 1e-2)
    )
    return {
        "converged": result.converged,
        "residual": result.residual,
        "consistency_residual": replayed,
        "outer_iterations": result.outer_iterations,
        "aggregator": result.aggregator_at_eq,
        "ergodic_at_solution": result.ergodic_at_solution,
        "population_weights": [float(w) for w in result.population.weights],
        "policy_action_index": [int(i) for i in result.policy.action_index],
        "policy_actions": [float(a) for a in result.policy.action_values],
        "value": [float(v) for v in result.value.values],
    }


def _write_solution_csvs(out_dir: Path, spec, result):
    pop = result.population
    _write_csv(
        out_dir / "population.csv",
        ["node"] + _axis_names(pop.grid) + ["weight"],
        _grid_rows(pop.grid, [pop.weights]),
    )
    state_grid = result.policy.grid
    _write_csv(
        out_dir / "policy.csv",
        ["node"] + _axis_names(state_grid) + ["action_index", "action"],
        _grid_rows(state_grid, [result.policy.action_index, result.policy.action_values]),
    )
    _write_csv(
        out_dir / "value.csv",
        ["node"] + _axis_names(state_grid) + ["value"],
        _grid_rows(state_grid, [result.value.values]),
    )


def _render_plots(cfg: RunConfig, out_dir: Path, **kwargs):
    if not cfg.plots:
        return
    from . import plots

    try:
        plots.render_all(out_dir, **kwargs)
    except Exception as exc:  # noqa: BLE001 - figures are a convenience, not a contract
        log.warning("plot rendering failed: %s", exc)


# ---------------------------------------------------------------------------
# command runners

def _run_solve(spec, cfg: RunConfig, out_dir: Path) -> int:
    result = _solve_once(spec, cfg)
    payload = {
        "command": "solve",
        "config": config_payload(cfg),
        **_solve_payload(spec, cfg, result),
    }
    _write_json(out_dir / "result.json", payload)
    _write_json(out_dir / "diagnostics.json", {"diagnostics": result.diagnostics})
    _write_solution_csvs(out_dir, spec, result)
    _write_csv(
        out_dir / "trace.csv",
        ["iteration", "residual", "aggregator", "aggregator_gap"],
        [
            [t["iteration"], _fmt(t["residual"]), _fmt(t["aggregator"]),
             _fmt(t["aggregator_gap"])]
            for t in result.trace
        ],
    )
    _render_plots(cfg, out_dir, spec=spec, result=result)
    return EXIT_OK


def _run_probe(spec, cfg: RunConfig, out_dir: Path) -> int:
    report = uniqueness_probe(
        spec,
        starts=cfg.probe_starts,
        tol=cfg.solver.tol,
        seed=cfg.seed,
        damping=cfg.solver.damping,
        max_outer=cfg.solver.max_outer,
        mode=cfg.solver.mode,
    )
    payload = {
        "command": "probe",
        "config": config_payload(cfg),
        "n_clusters": report.n_clusters,
        "threshold": report.threshold,
        "starts": list(cfg.probe_starts),
        "aggregator_values": list(report.aggregator_values),
        "distance_matrix": report.distance_matrix,
        "aggregator_gaps": report.aggregator_gaps,
        "orderings": [
            {"pair": list(pair), "ordering": ord_.name if ord_ is not None else None}
            for pair, ord_ in report.orderings
        ],
        "failures": list(report.failures),
    }
    _write_json(out_dir / "result.json", payload)
    _write_csv(
        out_dir / "trace.csv",
        ["start", "converged", "outer_iterations", "residual", "aggregator"],
        [
            [cfg.probe_starts[i], True, r.outer_iterations, _fmt(r.residual),
             _fmt(r.aggregator_at_eq)]
            for i, r in enumerate(report.results)
        ],
    )
    if not report.results:
        raise MaxOuterExceeded("no start converged", residual=None)
    first = report.results[0]
    _write_json(out_dir / "diagnostics.json", {"diagnostics": first.diagnostics})
    _write_solution_csvs(out_dir, spec, first)
    _render_plots(cfg, out_dir, spec=spec, result=first)
    return EXIT_OK


def _run_sweep(spec, cfg: RunConfig, out_dir: Path) -> int:
    builder = sweep_builder(cfg)
    report = comparative_sweep(
        builder,
        cfg.sweep["values"],
        cfg.sweep["expected_direction"],
        tol=cfg.solver.tol,
        jobs=cfg.jobs,
        damping=cfg.solver.damping,
        max_outer=cfg.solver.max_outer,
        mode=cfg.solver.mode,
    )
    payload = {
        "command": "sweep",
        "config": config_payload(cfg),
        "parameter": cfg.sweep["parameter"],
        "parameter_values": list(report.parameter_values),
        "aggregator_values": list(report.aggregator_values),
        "expected_direction": report.expected_direction,
        "monotone_flag": report.monotone_flag,
        "slack": report.slack,
        "failures": list(report.failures),
    }
    _write_json(out_dir / "result.json", payload)
    solved = [r for r in report.results if r is not None]
    _write_csv(
        out_dir / "trace.csv",
        ["parameter", "aggregator", "outer_iterations", "residual"],
        [
            [_fmt(v), _fmt(r.aggregator_at_eq), r.outer_iterations, _fmt(r.residual)]
            for v, r in zip(report.parameter_values, report.results)
            if r is not None
        ],
    )
    _write_json(out_dir / "diagnostics.json", {"failures": list(report.failures)})
    if solved:
        last = solved[-1]
        _write_solution_csvs(out_dir, spec, last)
        _render_plots(cfg, out_dir, spec=spec, result=last, sweep=report,
                      parameter=cfg.sweep["parameter"])
    if report.failures:
        raise MaxOuterExceeded(
            f"{len(report.failures)} sweep point(s) did not converge",
            residual=None,
        )
    return EXIT_OK


def _run_simulate(spec, cfg: RunConfig, out_dir: Path) -> int:
    result = _solve_once(spec, cfg)
    sim_tbl = cfg.simulate or {}
    sim_cfg = SimConfig(
        agents=sim_tbl.get("agents", 1000),
        horizon=sim_tbl.get("horizon", 50),
        seed=cfg.seed,
        burn_in=sim_tbl.get("burn_in", 10),
        cadence=sim_tbl.get("cadence", 1),
        state_mode=sim_tbl.get("state_mode", "grid-coupled"),
        sample_agents=sim_tbl.get("sample_agents", 0),
    )
    report = simulate_population(spec, result.policy, result.population, sim_cfg)
    payload = {
        "command": "simulate",
        "config": config_payload(cfg),
        **_solve_payload(spec, cfg, result),
        "simulation": {
            "agents": report.agents,
            "horizon": report.horizon,
            "seed": report.seed,
            "state_mode": report.state_mode,
            "times": list(report.times),
            "distances": list(report.distances),
            "post_burn_mean": report.post_burn_mean,
            "final_weights": [float(w) for w in report.final_population.weights],
        },
    }
    _write_json(out_dir / "result.json", payload)
    _write_json(out_dir / "diagnostics.json", {"diagnostics": result.diagnostics})
    _write_solution_csvs(out_dir, spec, result)
    _write_csv(
        out_dir / "trace.csv",
        ["step", "distance"],
        [[t, _fmt(d)] for t, d in zip(report.times, report.distances)],
    )
    _render_plots(cfg, out_dir, spec=spec, result=result, sim=report)
    return EXIT_OK


def _run_check(spec, cfg: RunConfig, out_dir: Path) -> int:
    """All structural diagnostics at the default probes, no equilibrium solve."""
    probes = default_probes(spec)
    probes = sorted(probes, key=lambda p: aggregator_value(spec, p))
    validation = validate_model(spec, probes=probes)
    checks = {"validation": validation}
    failed = not validation.passed

    kernels = []
    try:
        for s in probes:
            sol = value_iterate(spec, s, tol=min(cfg.solver.tol, 1e-9))
            kernels.append(build_kernel(sol.policy, s, spec))
        monotone = []
        for kern in kernels:
            try:
                rep = check_monotone_in_x(kern, axis=0)
                monotone.append(rep)
                failed = failed or not rep.passed
            except MarginalMismatch as exc:
                monotone.append(f"not comparable: {exc}")
        checks["kernel_monotone_in_x"] = monotone
        checks["ergodicity"] = ergodicity_probe(kernels[0], horizon=200)
        if spec.regeneration is not None:
            # every row must carry at least the restart probability at the
            # restart node
            prob, point = spec.regeneration
            restart = int(np.argmax(project_mass(point, spec.population_grid).weights))
            col = np.asarray(kernels[0].matrix[:, restart].todense()).ravel()
            checks["min_restart_row_mass"] = float(col.min())
            failed = failed or col.min() < prob - 1e-12
    except MfeLabError as exc:
        checks["kernel_checks"] = f"not available: {exc}"
        failed = True

    if spec.policy_transform is not None:
        try:
            order = check_decreasing_in_s(spec, probes[0], probes[-1])
            checks["kernel_decreasing_in_s"] = order
            failed = failed or not order.passed
        except (MarginalMismatch, UnorderedProbes) as exc:
            checks["kernel_decreasing_in_s"] = f"not comparable: {exc}"
        try:
            pol = policy_structure_report(spec, probes, tol=min(cfg.solver.tol, 1e-9))
            checks["policy"] = pol
            failed = failed or not (pol.monotone_in_x and pol.decreasing_in_s)
            if pol.lipschitz_ok is not None:
                failed = failed or not pol.lipschitz_ok
        except MfeLabError as exc:
            checks["policy"] = f"not available: {exc}"
            failed = True

    payload = {
        "command": "check",
        "config": config_payload(cfg),
        "passed": not failed,
        "violations": list(validation.violation_names()),
        "checks": checks,
    }
    _write_json(out_dir / "result.json", payload)
    _write_json(out_dir / "diagnostics.json", {"checks": checks})
    if failed:
        _write_error(
            out_dir,
            InvalidParams(list(validation.violation_names()) or ["structural check failed"]),
            EXIT_VALIDATION,
        )
        return EXIT_VALIDATION
    return EXIT_OK


_RUNNERS = {
    "solve": _run_solve,
    "probe": _run_probe,
    "sweep": _run_sweep,
    "simulate": _run_simulate,
    "check": _run_check,
}


def run_config(path: str, **overrides) -> int:
    """Load a config file, run its command, write artifacts, return exit code."""
    fallback_out = Path(overrides.get("out") or ".")
    try:
        cfg = load_config(path)
        cfg = apply_overrides(cfg, **overrides)
    except _CONFIG_ERRORS as exc:
        _write_error(fallback_out, exc, EXIT_CONFIG)
        return EXIT_CONFIG

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        spec = build_spec(cfg)
    except _CONFIG_ERRORS as exc:
        _write_error(out_dir, exc, EXIT_CONFIG)
        return EXIT_CONFIG

    try:
        return _RUNNERS[cfg.command](spec, cfg, out_dir)
    except _CONVERGENCE_ERRORS as exc:
        _write_error(out_dir, exc, EXIT_NO_CONVERGENCE)
        return EXIT_NO_CONVERGENCE
    except _VALIDATION_ERRORS + (InvalidParams, MassSumViolation) as exc:
        _write_error(out_dir, exc, EXIT_VALIDATION)
        return EXIT_VALIDATION


def replay_consistency(result_path: str) -> tuple[float, float]:
    """Recompute the consistency residual recorded in a result.json.

    Returns (recomputed, recorded); the two agree to high precision when
    the file is intact because the replay repeats the identical
    deterministic computation.
    """
    with open(result_path) as fh:
        payload = json.load(fh)
    cfg = rebuild_config(payload["config"])
    spec = build_spec(cfg)
    s = PopulationState(
        spec.population_grid, np.asarray(payload["population_weights"], dtype=float)
    )
    recomputed = consistency_residual(s, spec, dp_tol=min(1e-9, cfg.solver.tol * 1e-2))
    return recomputed, float(payload["consistency_residual"])


# ---------------------------------------------------------------------------
# argument parsing

_SUBCOMMANDS = {
    "solve": "solve",
    "probe-uniqueness": "probe",
    "sweep": "sweep",
    "simulate": "simulate",
    "check": "check",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfe-lab",
        description="Grid laboratory for stationary equilibria of anonymous games",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, command in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {command} command from a config")
        p.add_argument("--config", required=True, help="path to a TOML run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--jobs", type=int, default=None, help="parallel solves for sweeps")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--tol", type=float, default=None, help="solver tolerance override")
        p.add_argument("--mode", choices=("mu_s", "phi"), default=None,
                       help="outer-map mode override")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging()
    return run_config(
        args.config,
        command=_SUBCOMMANDS[args.subcommand],
        out=args.out,
        jobs=args.jobs,
        seed=args.seed,
        tol=args.tol,
        mode=args.mode,
    )


if __name__ == "__main__":
    sys.exit(main())
