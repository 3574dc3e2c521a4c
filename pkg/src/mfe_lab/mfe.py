"""Stationary equilibrium: damped outer iteration, probes, and sweeps.

An equilibrium is a population that is stationary for the kernel its own
optimal policy induces.  The default outer map replaces the population with
the invariant distribution of that kernel; a one-step mode replaces it with
a single kernel application instead.  Both are damped, and convergence
requires the Kolmogorov residual and the aggregator gap to close at once,
since the payoff feedback runs entirely through the aggregator.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, MarginalMismatch, MaxOuterExceeded
from .measure import (
    Ordering,
    PopulationState,
    fosd_compare,
    fosd_compare_x1,
    kolmogorov_distance,
)
from .model import ModelSpec, aggregator_value
from .dp import policy_structure_report, value_iterate
from .kernel import (
    ErgodicityFlag,
    apply_M,
    build_kernel,
    check_monotone_in_x,
    ergodicity_probe,
    invariant_distribution,
    _invariant_weights,
)

log = logging.getLogger(__name__)

CLUSTER_FACTOR = 10.0  # equilibria within this many tolerances are one cluster


@dataclass(frozen=True)
class MfeResult:
    """Solved equilibrium candidate with its diagnostics bundle."""

    population: PopulationState
    policy: object
    value: object
    residual: float
    outer_iterations: int
    aggregator_at_eq: float
    converged: bool
    ergodic_at_solution: bool
    diagnostics: dict = field(default_factory=dict)
    trace: tuple = ()


def aggregator_range(spec: ModelSpec) -> float:
    """Spread of the aggregator between the extreme Dirac populations."""
    g = spec.population_grid
    lo = aggregator_value(spec, PopulationState.dirac(g, 0))
    hi = aggregator_value(spec, PopulationState.dirac(g, g.n - 1))
    return abs(hi - lo)


def phi_apply(s: PopulationState, spec: ModelSpec, dp_tol: float = 1e-9) -> PopulationState:
    """One step of the equilibrium operator: best-respond, then flow once."""
    sol = value_iterate(spec, s, tol=dp_tol)
    kern = build_kernel(sol.policy, s, spec)
    return apply_M(s, kern)


def consistency_residual(s: PopulationState, spec: ModelSpec, dp_tol: float = 1e-9) -> float:
    """Kolmogorov distance between s and the invariant distribution it induces."""
    sol = value_iterate(spec, s, tol=dp_tol)
    kern = build_kernel(sol.policy, s, spec)
    mu = _invariant_weights(kern, tol=min(dp_tol, 1e-10), max_iterations=100_000, warm=s.weights)
    return kolmogorov_distance(PopulationState(s.grid, mu), s)


def _solution_diagnostics(spec, s, sol, kern, tol):
    diag = {}
    try:
        diag["monotone_in_x"] = check_monotone_in_x(kern, axis=0)
    except MarginalMismatch as exc:
        diag["monotone_in_x"] = f"not comparable: {exc}"
    diag["ergodicity"] = ergodicity_probe(kern, horizon=200, tol=tol)
    g = spec.population_grid
    lo = PopulationState.dirac(g, 0)
    hi = PopulationState.dirac(g, g.n - 1)
    probes = sorted([lo, s, hi], key=lambda p: aggregator_value(spec, p))
    try:
        diag["policy"] = policy_structure_report(spec, probes, tol=min(tol, 1e-9))
    except Exception as exc:  # noqa: BLE001 - diagnostics must not kill a solve
        diag["policy"] = f"not available: {exc}"
    return diag


def solve_mfe(
    spec: ModelSpec,
    s0: PopulationState | None = None,
    damping: float = 0.5,
    tol: float = 1e-7,
    max_outer: int = 500,
    mode: str = "mu_s",
    dp_tol: float | None = None,
    inner_tol: float | None = None,
    diagnostics: bool = True,
) -> MfeResult:
    """Damped fixed-point iteration on the population state.

    mode "mu_s" targets the invariant distribution of the current kernel
    each step; mode "phi" targets one kernel application.  The update is
    s <- (1 - lambda) s + lambda target, where lambda starts at ``damping``
    and halves whenever the residual stops improving for a stretch (the
    iteration then restarts from the best iterate seen).  A steep
    best-response slope turns fixed damping into a sustained oscillation;
    the adaptive step is what makes the limit independent of the starting
    damping value.  Success requires the consistency residual (distance
    between s and its kernel's invariant distribution) within tol and the
    aggregator gap within tol times the aggregator's grid range.  Raises
    MaxOuterExceeded carrying the best iterate when the budget runs out.
    """
    if mode not in ("mu_s", "phi"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    g = spec.population_grid
    s = s0 if s0 is not None else PopulationState.uniform(g)
    if s.grid != g:
        raise GridMismatch("initial population lives on the wrong grid")
    dp_tol = dp_tol if dp_tol is not None else min(1e-9, tol * 1e-2)
    inner_tol = inner_tol if inner_tol is not None else min(1e-10, tol * 1e-2)
    h_scale = aggregator_range(spec)
    h_tol = tol * (h_scale if h_scale > 0 else 1.0)

    lam = damping
    stall = 0
    improve_streak = 0
    warm_v = None
    best = None
    trace = []
    t0 = time.perf_counter()
    for it in range(1, max_outer + 1):
        sol = value_iterate(spec, s, tol=dp_tol, warm_start=warm_v)
        warm_v = sol.value
        kern = build_kernel(sol.policy, s, spec)
        h_s = aggregator_value(spec, s)

        mu_w = _invariant_weights(kern, tol=inner_tol, max_iterations=100_000, warm=s.weights)
        mu = PopulationState(g, mu_w)
        residual = kolmogorov_distance(s, mu)
        h_gap = abs(aggregator_value(spec, mu) - h_s)
        target = apply_M(s, kern) if mode == "phi" else mu

        trace.append({"iteration": it, "residual": residual, "aggregator": h_s, "aggregator_gap": h_gap})
        if best is None or residual < best[0] * (1.0 - 1e-3):
            if best is None or residual < best[0]:
                best = (residual, s, sol, kern)
            stall = 0
            improve_streak += 1
        else:
            if residual < best[0]:
                best = (residual, s, sol, kern)
            stall += 1
            improve_streak = 0
        log.debug(
            "outer %d: residual %.3e, H %.6g, gap %.3e, step %.4g",
            it, residual, h_s, h_gap, lam,
        )

        if residual <= tol and h_gap <= h_tol:
            ergodic = True
            diag = {}
            if diagnostics:
                _, flag = invariant_distribution(kern, tol=inner_tol)
                ergodic = flag is ErgodicityFlag.UNIQUE
                diag = _solution_diagnostics(spec, s, sol, kern, tol)
                if not ergodic:
                    diag["non_ergodic_at_candidate"] = True
            log.info(
                "%s equilibrium: %d outer iterations, residual %.3e (%.2fs)",
                spec.name, it, residual, time.perf_counter() - t0,
            )
            return MfeResult(
                population=s,
                policy=sol.policy,
                value=sol.value,
                residual=residual,
                outer_iterations=it,
                aggregator_at_eq=h_s,
                converged=True,
                ergodic_at_solution=ergodic,
                diagnostics=diag,
                trace=tuple(trace),
            )

        if stall >= 10 and lam > 1.0 / 64.0:
            # no progress for a stretch: halve the step and rewind to the
            # best iterate, which tames oscillation around a steep response
            lam = max(0.5 * lam, 1.0 / 64.0)
            stall = 0
            s = best[1]
            warm_v = best[2].value
            continue
        if improve_streak >= 20 and lam < damping:
            # steady progress at a reduced step: cautiously grow back
            lam = min(2.0 * lam, damping)
            improve_streak = 0
        w_new = (1.0 - lam) * s.weights + lam * target.weights
        s = PopulationState(g, w_new / w_new.sum())

    res, s_best, sol_best, kern_best = best
    partial = MfeResult(
        population=s_best,
        policy=sol_best.policy,
        value=sol_best.value,
        residual=res,
        outer_iterations=max_outer,
        aggregator_at_eq=aggregator_value(spec, s_best),
        converged=False,
        ergodic_at_solution=False,
        diagnostics={},
        trace=tuple(trace),
    )
    raise MaxOuterExceeded(
        f"no equilibrium within {max_outer} outer iterations (best residual {res:.3e})",
        best=partial,
        residual=res,
    )


def probe_starts(spec: ModelSpec, kinds=("dirac_lo", "dirac_hi", "uniform"), seed: int = 0):
    """Build starting populations by name: dirac_lo, dirac_hi, uniform, random."""
    g = spec.population_grid
    rng = np.random.default_rng(seed)
    out = []
    for kind in kinds:
        if isinstance(kind, PopulationState):
            out.append(kind)
        elif kind == "dirac_lo":
            out.append(PopulationState.dirac(g, 0))
        elif kind == "dirac_hi":
            out.append(PopulationState.dirac(g, g.n - 1))
        elif kind == "uniform":
            out.append(PopulationState.uniform(g))
        elif kind == "random":
            out.append(PopulationState(g, rng.dirichlet(np.ones(g.n))))
        else:
            raise ValueError(f"unknown start kind {kind!r}")
    return out


@dataclass(frozen=True)
class UniquenessReport:
    """Multi-start probe: cluster structure of solved equilibria."""

    n_clusters: int
    threshold: float
    distance_matrix: np.ndarray
    aggregator_values: tuple
    aggregator_gaps: np.ndarray
    orderings: tuple  # pairwise Ordering or None when incomparable by construction
    results: tuple
    failures: tuple


def _cluster_count(dist: np.ndarray, threshold: float) -> int:
    n = dist.shape[0]
    labels = [-1] * n
    cluster = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = cluster
        while stack:
            j = stack.pop()
            for k in range(n):
                if labels[k] < 0 and dist[j, k] <= threshold:
                    labels[k] = cluster
                    stack.append(k)
        cluster += 1
    return cluster


def uniqueness_probe(
    spec: ModelSpec,
    starts=None,
    tol: float = 1e-7,
    seed: int = 0,
    **solver_kwargs,
) -> UniquenessReport:
    """Solve from several starts and cluster the limits.

    Starts may be PopulationStates or the names accepted by
    ``probe_starts``; the default is the two extreme Diracs plus uniform.
    Limits within 10 * tol Kolmogorov distance merge into one cluster.
    """
    if starts is None:
        starts = ("dirac_lo", "dirac_hi", "uniform")
    populations = probe_starts(spec, starts, seed=seed)
    results = []
    failures = []
    for i, s0 in enumerate(populations):
        try:
            results.append(solve_mfe(spec, s0=s0, tol=tol, **solver_kwargs))
        except MaxOuterExceeded as exc:
            failures.append({"start": i, "error": str(exc), "residual": exc.residual})

    k = len(results)
    dist = np.zeros((k, k))
    gaps = np.zeros((k, k))
    orderings = {}
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = kolmogorov_distance(
                results[i].population, results[j].population
            )
            gaps[i, j] = gaps[j, i] = abs(
                results[i].aggregator_at_eq - results[j].aggregator_at_eq
            )
            try:
                if spec.population_grid.ndim == 1:
                    ordv = fosd_compare(results[i].population, results[j].population, tol=tol)
                else:
                    ordv = fosd_compare_x1(results[i].population, results[j].population, tol=tol)
            except MarginalMismatch:
                ordv = None
            orderings[(i, j)] = ordv

    threshold = CLUSTER_FACTOR * tol
    n_clusters = _cluster_count(dist, threshold) if k else 0
    return UniquenessReport(
        n_clusters=n_clusters,
        threshold=threshold,
        distance_matrix=dist,
        aggregator_values=tuple(r.aggregator_at_eq for r in results),
        aggregator_gaps=gaps,
        orderings=tuple(sorted(orderings.items())),
        results=tuple(results),
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class SweepResult:
    """Equilibria along one parameter axis with a monotonicity verdict."""

    parameter_values: tuple
    aggregator_values: tuple
    expected_direction: str
    monotone_flag: bool
    slack: float
    results: tuple
    failures: tuple


def comparative_sweep(
    spec_builder,
    parameter_values,
    expected_direction: str,
    tol: float = 1e-7,
    jobs: int = 1,
    **solver_kwargs,
) -> SweepResult:
    """Solve the equilibrium at each parameter value and test monotonicity.

    ``spec_builder`` maps a parameter value to a ModelSpec.  The flag holds
    when the solved aggregator sequence moves in ``expected_direction``
    ("increasing" or "decreasing") allowing 2 * 10 * tol of aggregator-range
    slack per comparison (each endpoint is only solved to cluster radius).
    Per-point solver failures are recorded and fail the flag.
    """
    if expected_direction not in ("increasing", "decreasing"):
        raise ValueError("expected_direction must be 'increasing' or 'decreasing'")
    values = list(parameter_values)

    def run_one(v):
        spec = spec_builder(v)
        return solve_mfe(spec, tol=tol, **solver_kwargs)

    results: list = [None] * len(values)
    failures = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_one, v): i for i, v in enumerate(values)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except MaxOuterExceeded as exc:
                    failures.append({"parameter": values[i], "error": str(exc)})
    else:
        for i, v in enumerate(values):
            try:
                results[i] = run_one(v)
            except MaxOuterExceeded as exc:
                failures.append({"parameter": v, "error": str(exc)})

    solved = [r for r in results if r is not None]
    aggs = [r.aggregator_at_eq for r in solved]
    scale = aggregator_range(spec_builder(values[0])) if values else 1.0
    slack = 2.0 * CLUSTER_FACTOR * tol * (scale if scale > 0 else 1.0)
    flag = not failures and len(solved) == len(values)
    if flag:
        for a, b in zip(aggs, aggs[1:]):
            if expected_direction == "increasing" and b < a - slack:
                flag = False
            if expected_direction == "decreasing" and b > a + slack:
                flag = False
    return SweepResult(
        parameter_values=tuple(values),
        aggregator_values=tuple(aggs),
        expected_direction=expected_direction,
        monotone_flag=flag,
        slack=slack,
        results=tuple(results),
        failures=tuple(failures),
    )
