"""Acceptance battery: one numbered criterion per test, one printed line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL lines as
they complete.  Every tolerance and time budget is asserted, not just printed.
"""

import itertools
import sys
import time

import numpy as np
import pytest

from mfe_lab import (
    ErgodicityFlag,
    Grid,
    MarkovKernel,
    ModelSpec,
    Ordering,
    PopulationState,
    ShockDistribution,
    TypedModelFamily,
    advertising_model,
    aiyagari_model,
    apply_M,
    build_kernel,
    capacity_model,
    check_decreasing_in_s,
    check_monotone_in_x,
    default_probes,
    fosd_compare,
    invariant_direct,
    invariant_distribution,
    kolmogorov_distance,
    policy_structure_report,
    quality_ladder_model,
    reputation_model,
    SimConfig,
    simulate_population,
    solve_mfe,
    uniqueness_probe,
    value_iterate,
    comparative_sweep,
)

TOL = 1e-7
FIVE_STARTS = ("dirac_lo", "dirac_hi", "uniform", "random", "random")

# Derived anchors.  With a one-homogeneous output and an exactly sustained
# grid cap, a locked constant policy a* pins the equilibrium aggregate in
# closed form: H* = (kappa0 + sqrt(a*)) / delta.
CAPACITY_H = (0.1 + np.sqrt(0.92)) / 0.3          # a* = 0.92
TWO_TYPE_H = (1.1 + 0.1 + np.sqrt(0.71)) / 0.6    # a* = (1.00, 0.71), equal masses


def emit(label: str, ok: bool, elapsed: float, budget: float | None = None):
    speed = f"{elapsed:.1f}s" + (f" < {budget:.0f}s" if budget else "")
    print(f"{label}: {'PASS' if ok else 'FAIL'} ({speed})", file=sys.__stdout__, flush=True)


@pytest.fixture(scope="module")
def capacity_spec():
    return capacity_model()


@pytest.fixture(scope="module")
def capacity_eq(capacity_spec):
    return solve_mfe(capacity_spec, tol=TOL)


# --------------------------------------------------------------------------
# 1. invariant distributions: power iteration against the direct linear solve


def test_a01_inner_solver_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 51))
        q = rng.uniform(size=(n, n)) + 1e-3
        q /= q.sum(axis=1, keepdims=True)
        kernel = MarkovKernel(Grid(np.arange(n, dtype=float)), q)
        direct = invariant_direct(kernel)
        power, flag = invariant_distribution(kernel, tol=1e-12, method="power")
        assert flag is ErgodicityFlag.UNIQUE
        worst = max(worst, float(np.max(np.abs(direct.weights - power.weights))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    emit("A01 invariant solver agreement", ok, elapsed, 1.0)
    assert worst <= 1e-10, worst
    assert elapsed < 1.0


# --------------------------------------------------------------------------
# 2. value iteration against exhaustive stationary-policy enumeration


def _toy(table, moves, probs, beta):
    grid = Grid(np.arange(table.shape[0], dtype=float))
    move_list = [np.asarray(m, dtype=np.intp) for m in moves]

    def payoff(x, a, s):
        return table[np.asarray(x, dtype=np.intp), np.asarray(a, dtype=np.intp)]

    def transition(x, a, s, zeta):
        m = move_list[int(zeta)]
        return m[np.asarray(x, dtype=np.intp), np.asarray(a, dtype=np.intp)].astype(float)

    return ModelSpec(
        name="toy",
        state_grid=grid,
        action_grid=np.arange(table.shape[1], dtype=float),
        payoff=payoff,
        transition=transition,
        shocks=ShockDistribution(
            tuple(float(z) for z in range(len(probs))), tuple(probs)
        ),
        discount=beta,
        aggregator=lambda s: float(np.dot(s.grid.axes[0], s.weights)),
    )


def _enumerated_optimum(table, moves, probs, beta):
    n, m = table.shape
    best = np.full(n, -np.inf)
    for sigma in itertools.product(range(m), repeat=n):
        idx = np.asarray(sigma)
        r = table[np.arange(n), idx]
        p = np.zeros((n, n))
        for z, pz in enumerate(probs):
            nxt = np.asarray(moves[z], dtype=np.intp)[np.arange(n), idx]
            p[np.arange(n), nxt] += pz
        best = np.maximum(best, np.linalg.solve(np.eye(n) - beta * p, r))
    return best


def test_a02_dp_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(2, 4))
        n_shocks = int(rng.integers(1, 3))
        table = rng.normal(size=(n, m))
        moves = [rng.integers(0, n, size=(n, m)) for _ in range(n_shocks)]
        if n_shocks == 1:
            probs = [1.0]
        else:
            p = float(rng.uniform(0.2, 0.8))
            probs = [p, 1.0 - p]
        beta = float(rng.uniform(0.3, 0.95))
        spec = _toy(table, moves, probs, beta)
        s = PopulationState.uniform(spec.population_grid)
        sol = value_iterate(spec, s, tol=1e-10)
        exact = _enumerated_optimum(table, moves, probs, beta)
        worst = max(worst, float(np.max(np.abs(sol.value.values - exact))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 5.0
    emit("A02 decision-problem oracle agreement", ok, elapsed, 5.0)
    assert worst <= 1e-8, worst
    assert elapsed < 5.0


# --------------------------------------------------------------------------
# 3. multi-start uniqueness: capacity and quality ladder


def _probe_unique(spec, budget, label):
    t0 = time.perf_counter()
    report = uniqueness_probe(spec, starts=FIVE_STARTS, tol=TOL, seed=2026)
    elapsed = time.perf_counter() - t0
    max_pair = float(report.distance_matrix.max())
    ok = (
        report.n_clusters == 1
        and not report.failures
        and max_pair <= 10 * TOL
        and elapsed < budget
    )
    emit(label, ok, elapsed, budget)
    assert report.n_clusters == 1
    assert not report.failures
    assert max_pair <= 10 * TOL, max_pair
    assert elapsed < budget
    return report


def test_a03_uniqueness_capacity_and_quality(capacity_spec):
    assert capacity_spec.state_grid.n == 100
    rep = _probe_unique(capacity_spec, 60.0, "A03a capacity five-start uniqueness")
    assert abs(rep.aggregator_values[0] - CAPACITY_H) <= 1e-5
    _probe_unique(quality_ladder_model(), 60.0, "A03b quality-ladder five-start uniqueness")


# --------------------------------------------------------------------------
# 4. multi-start uniqueness: advertising and reputation


def test_a04_uniqueness_advertising_and_reputation():
    _probe_unique(advertising_model(), 120.0, "A04a advertising five-start uniqueness")
    _probe_unique(reputation_model(), 120.0, "A04b reputation five-start uniqueness")


# --------------------------------------------------------------------------
# 5. kernel order diagnostics at aggregator-ordered probes


def test_a05_kernel_order_diagnostics():
    t0 = time.perf_counter()
    bad = []
    for spec in (capacity_model(), quality_ladder_model()):
        probes = default_probes(spec)
        kernels = []
        for s in probes:
            sol = value_iterate(spec, s, tol=1e-9)
            kernels.append(build_kernel(sol.policy, s, spec))
        for k_idx, kern in enumerate(kernels):
            rep = check_monotone_in_x(kern)
            if rep.violations:
                bad.append((spec.name, "monotone_in_x", k_idx, rep.max_gap))
        for i, j in ((0, 1), (1, 2), (0, 2)):
            rep = check_decreasing_in_s(spec, probes[i], probes[j])
            if rep.violations:
                bad.append((spec.name, "decreasing_in_s", (i, j), rep.max_gap))
    elapsed = time.perf_counter() - t0
    emit("A05 kernel order diagnostics", not bad, elapsed)
    assert not bad, bad


# --------------------------------------------------------------------------
# 6. comparative statics directions, five sweeps


SWEEPS = (
    ("capacity", "d", (0.5, 1.0, 2.0), "decreasing"),
    ("capacity", "beta", (0.8, 0.9, 0.95), "increasing"),
    ("advertising", "beta", (0.82, 0.90, 0.95), "increasing"),
    ("advertising", "r", (2.4, 3.0, 3.6), "increasing"),
    ("reputation", "d", (0.4, 0.5, 0.6), "decreasing"),
)

BUILDERS = {
    "capacity": capacity_model,
    "advertising": advertising_model,
    "reputation": reputation_model,
}


def test_a06_comparative_statics_directions():
    t0 = time.perf_counter()
    failures = []
    for model, parameter, values, direction in SWEEPS:
        builder = BUILDERS[model]
        rep = comparative_sweep(
            lambda v, b=builder, p=parameter: b(**{p: v}),
            values,
            direction,
            tol=TOL,
        )
        if not rep.monotone_flag:
            failures.append((model, parameter, rep.aggregator_values, rep.failures))
        # directions must hold strictly, not merely within slack
        aggs = rep.aggregator_values
        strict = all(
            (b > a) if direction == "increasing" else (b < a)
            for a, b in zip(aggs, aggs[1:])
        )
        if not strict:
            failures.append((model, parameter, "not strict", aggs))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 600.0
    emit("A06 comparative statics directions (5 sweeps)", ok, elapsed, 600.0)
    assert not failures, failures
    assert elapsed < 600.0


# --------------------------------------------------------------------------
# 7. policy structure with one-cell slack


def test_a07_capacity_policy_structure(capacity_spec):
    t0 = time.perf_counter()
    report = policy_structure_report(capacity_spec, default_probes(capacity_spec))
    elapsed = time.perf_counter() - t0
    ok = (
        report.monotone_in_x
        and report.decreasing_in_s
        and report.lipschitz_ok is True
    )
    emit("A07 policy structure (monotone, decreasing, Lipschitz-1)", ok, elapsed)
    assert report.monotone_in_x, report.monotone_violations[:3]
    assert report.decreasing_in_s, report.decreasing_violations[:3]
    assert report.lipschitz_ok, (report.lipschitz_max, report.lipschitz_bound)


# --------------------------------------------------------------------------
# 8. compact support: exhaustive transition containment


def test_a08_capacity_transitions_stay_on_the_grid(capacity_spec):
    t0 = time.perf_counter()
    spec = capacity_spec
    x = spec.state_grid.axes[0][:, None]
    a = spec.action_grid[None, :]
    s = PopulationState.uniform(spec.population_grid)
    cap = spec.state_grid.axes[0][-1] * 1.01
    worst_hi, worst_lo = -np.inf, np.inf
    for zeta in spec.shocks.values:
        img = np.asarray(spec.transition(x, a, s, zeta), dtype=float)
        assert img.shape == (spec.n_states, spec.n_actions)
        worst_hi = max(worst_hi, float(img.max()))
        worst_lo = min(worst_lo, float(img.min()))
    elapsed = time.perf_counter() - t0
    ok = worst_lo >= 0.0 and worst_hi <= cap
    emit("A08 exhaustive transition containment", ok, elapsed)
    assert worst_lo >= 0.0
    assert worst_hi <= cap, (worst_hi, cap)


# --------------------------------------------------------------------------
# 9. uniform restart mass in every reputation row


def test_a09_reputation_minorization():
    t0 = time.perf_counter()
    spec = reputation_model()
    restart_prob = spec.regeneration[0]
    worst = np.inf
    for s in default_probes(spec):
        sol = value_iterate(spec, s, tol=1e-9)
        kern = build_kernel(sol.policy, s, spec)
        col0 = np.asarray(kern.matrix[:, 0].todense()).ravel()
        worst = min(worst, float(col0.min()))
    elapsed = time.perf_counter() - t0
    ok = worst >= restart_prob  # exact: restart mass enters each row additively
    emit("A09 reputation restart minorization", ok, elapsed)
    assert worst >= restart_prob, (worst, restart_prob)


# --------------------------------------------------------------------------
# 10. savings equilibrium: market clearing and uniqueness


def test_a10_aiyagari_market_clearing():
    t0 = time.perf_counter()
    spec = aiyagari_model()
    assert spec.params["sigma"] == 1.0  # log utility defaults
    result = solve_mfe(spec, tol=TOL)
    k_used = result.aggregator_at_eq
    sol = value_iterate(spec, result.population, tol=1e-9)
    kern = build_kernel(sol.policy, result.population, spec)
    mu, _ = invariant_distribution(kern, tol=1e-11)
    k_implied = spec.aggregator(mu)
    gap = abs(k_implied - k_used)
    probe = uniqueness_probe(spec, starts=FIVE_STARTS, tol=TOL, seed=2026)
    elapsed = time.perf_counter() - t0
    ok = (
        result.converged
        and gap <= 1e-5
        and probe.n_clusters == 1
        and not probe.failures
        and elapsed < 300.0
    )
    emit("A10 savings market clearing + uniqueness", ok, elapsed, 300.0)
    assert result.converged
    assert gap <= 1e-5, gap
    assert probe.n_clusters == 1
    assert not probe.failures
    assert elapsed < 300.0


# --------------------------------------------------------------------------
# 11. sandwich property of the frozen-kernel iterates


def test_a11_ordered_kernel_iterates_stay_ordered(capacity_spec):
    t0 = time.perf_counter()
    spec = capacity_spec
    g = spec.population_grid
    s_low = PopulationState.dirac(g, 0)
    s_high = PopulationState.dirac(g, g.n - 1)
    kern_low = build_kernel(value_iterate(spec, s_low, tol=1e-9).policy, s_low, spec)
    kern_high = build_kernel(value_iterate(spec, s_high, tol=1e-9).policy, s_high, spec)

    theta1 = s_high  # dominates theta2 at n = 0
    theta2 = s_low
    ok = True
    first_break = None
    for n in range(1, 201):
        theta1 = apply_M(theta1, kern_low)
        theta2 = apply_M(theta2, kern_high)
        order = fosd_compare(theta1, theta2)
        if order not in (Ordering.DOMINATES, Ordering.EQUAL):
            ok = False
            first_break = n
            break
    elapsed = time.perf_counter() - t0
    emit("A11 ordered iterates stay ordered (n <= 200)", ok, elapsed)
    assert ok, f"order broke at step {first_break}"


# --------------------------------------------------------------------------
# 12. finite panels concentrate on the solved population


def test_a12_simulation_statistics(capacity_spec, capacity_eq):
    t0 = time.perf_counter()
    s_star = capacity_eq.population
    n_seeds = 20
    ratios = {}
    z_worst = {}
    for m in (1000, 10000):
        means = []
        finals = []
        for seed in range(n_seeds):
            rep = simulate_population(
                capacity_spec,
                capacity_eq.policy,
                s_star,
                SimConfig(agents=m, horizon=50, burn_in=10, seed=seed),
            )
            means.append(rep.post_burn_mean)
            finals.append(rep.final_population.weights)
        ratios[m] = float(np.mean(means)) * np.sqrt(m)

        finals = np.asarray(finals)
        mean_w = finals.mean(axis=0)
        sample_se = finals.std(axis=0, ddof=1) / np.sqrt(n_seeds)
        floor_se = np.sqrt(s_star.weights * (1.0 - s_star.weights) / (m * n_seeds))
        se = np.maximum(np.maximum(sample_se, floor_se), 1e-300)
        z = np.abs(mean_w - s_star.weights) / se
        z_worst[m] = float(z.max())

    elapsed = time.perf_counter() - t0
    scaling_ok = all(1.0 / 3.0 <= r <= 3.0 for r in ratios.values())
    nodewise_ok = all(z <= 4.0 for z in z_worst.values())
    ok = scaling_ok and nodewise_ok and elapsed < 300.0
    emit("A12 panel statistics (scaling + nodewise)", ok, elapsed, 300.0)
    assert scaling_ok, ratios
    assert nodewise_ok, z_worst
    assert elapsed < 300.0


# --------------------------------------------------------------------------
# 13. typed extension: degenerate round trip and two-type ordering


def test_a13_typed_extension(capacity_spec, capacity_eq):
    t0 = time.perf_counter()

    single = TypedModelFamily(members=(capacity_model(),), masses=(1.0,)).extend()
    ext_eq = solve_mfe(single, tol=TOL)
    n = capacity_spec.population_grid.n
    marginal = ext_eq.population.weights.reshape(1, n).sum(axis=0)
    round_trip_gap = float(np.max(np.abs(marginal - capacity_eq.population.weights)))

    family = TypedModelFamily(
        members=(capacity_model(d=0.85), capacity_model(d=1.15)),
        masses=(0.5, 0.5),
    )
    two = family.extend()
    two_eq = solve_mfe(two, tol=TOL)
    actions = two_eq.policy.action_values.reshape(2, n)
    # the cheap-investment type must invest at least as much at every node
    ordered = bool(np.all(actions[0] >= actions[1]))
    strict_somewhere = bool(np.any(actions[0] > actions[1]))
    h_gap = abs(two_eq.aggregator_at_eq - TWO_TYPE_H)

    elapsed = time.perf_counter() - t0
    ok = (
        round_trip_gap <= 1e-12
        and two_eq.converged
        and ordered
        and strict_somewhere
        and h_gap <= 1e-5
    )
    emit("A13 typed extension round trip + ordering", ok, elapsed)
    assert round_trip_gap <= 1e-12, round_trip_gap
    assert two_eq.converged
    assert ordered
    assert strict_somewhere
    assert h_gap <= 1e-5, h_gap
