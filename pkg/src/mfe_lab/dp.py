"""Value iteration on a fixed grid at a frozen population state.

The Bellman operator is evaluated from tables precomputed once per
population state: the payoff matrix over (node, action), the feasibility
mask, and the interpolation stencil of every transition image.  Off-grid
images are split between bracketing nodes, so expected continuation values
are gather-and-weigh operations and each sweep is a handful of vectorized
array ops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatch,
    InfeasibleBudget,
    MaxIterationsExceeded,
    TransitionEscape,
    UnorderedProbes,
)
from .measure import Grid, PopulationState, _bracket_axis
from .model import ModelSpec, _eval_meshes, aggregator_value

log = logging.getLogger(__name__)

DEFAULT_DP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ValueFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel().copy()
        if v.size != self.grid.n:
            raise GridMismatch("value vector length does not match the grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class Policy:
    """One action index per state node (indices into ``action_grid``)."""

    grid: Grid
    action_index: np.ndarray
    action_grid: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.action_index, dtype=np.intp).ravel().copy()
        if idx.size != self.grid.n:
            raise GridMismatch("policy length does not match the grid")
        idx.setflags(write=False)
        object.__setattr__(self, "action_index", idx)

    @property
    def action_values(self) -> np.ndarray:
        return np.asarray(self.action_grid)[self.action_index]


@dataclass(frozen=True)
class DpSolution:
    value: ValueFunction
    policy: Policy
    iterations: int
    residuals: np.ndarray  # successive sup-norm differences, one per sweep


def _bracket_images(spec: ModelSpec, img, shape):
    """Interpolation stencil of a transition image: list of (flat_idx, weight)."""
    imgs = img if isinstance(img, tuple) else (img,)
    if len(imgs) != spec.state_grid.ndim:
        raise GridMismatch("transition returned the wrong number of coordinate arrays")
    per_axis = []
    for ax, im in zip(spec.state_grid.axes, imgs):
        im = np.broadcast_to(np.asarray(im, dtype=float), shape)
        lo_b, hi_b = ax[0], ax[-1]
        if np.any(im < lo_b - 1e-12) or np.any(im > hi_b + 1e-12):
            worst = float(im.min()) if np.any(im < lo_b - 1e-12) else float(im.max())
            raise TransitionEscape(
                f"transition image {worst!r} escapes [{lo_b!r}, {hi_b!r}]"
            )
        lo, t = _bracket_axis(ax, im)
        per_axis.append(((lo, 1.0 - t), (lo + (1 if ax.size > 1 else 0), t)))
    if spec.state_grid.ndim == 1:
        return [(idx, w) for idx, w in per_axis[0]]
    n2 = spec.state_grid.shape[1]
    out = []
    for i1, w1 in per_axis[0]:
        for i2, w2 in per_axis[1]:
            out.append((i1 * n2 + i2, w1 * w2))
    return out


class _DpTables:
    """Per-(spec, population) tables for fast Bellman sweeps."""

    def __init__(self, spec: ModelSpec, s: PopulationState):
        if s.grid != spec.population_grid:
            raise GridMismatch("population state grid does not match the spec")
        self.spec = spec
        n, m = spec.n_states, spec.n_actions
        x, a = _eval_meshes(spec)

        lo, hi = spec.feasible_range(s)
        if np.any(hi < lo):
            bad = int(np.argmax(hi < lo))
            raise InfeasibleBudget(f"no feasible action at node {bad}")
        col = np.arange(m)
        self.feas_mask = (col >= lo[:, None]) & (col <= hi[:, None])

        r = np.broadcast_to(np.asarray(spec.payoff(x, a, s), dtype=float), (n, m))
        self.reward = np.where(self.feas_mask, r, -np.inf)

        # Gather terms: continuation value is sum of w * V[idx] over the stencil.
        self.stencil = []
        for zeta, p in spec.shocks:
            if p == 0.0:
                continue
            img = spec.transition(x, a, s, zeta)
            for idx, w in _bracket_images(spec, img, (n, m)):
                wp = w * p
                if np.any(wp != 0.0):
                    self.stencil.append((idx, wp))
        self.n, self.m = n, m

    def sweep(self, v: np.ndarray):
        """One synchronous Bellman update: returns (new values, argmax indices)."""
        ev = np.zeros((self.n, self.m))
        for idx, w in self.stencil:
            ev += w * v[idx]
        q = self.reward + self.spec.discount * ev
        pol = np.argmax(q, axis=1)  # first maximum = lowest action index on ties
        return q[np.arange(self.n), pol], pol


def bellman_apply(v: ValueFunction, s: PopulationState, spec: ModelSpec):
    """One synchronous Bellman sweep; ties resolve to the lowest action index."""
    if v.grid != spec.state_grid:
        raise GridMismatch("value function grid does not match the spec")
    tables = _DpTables(spec, s)
    new_v, pol = tables.sweep(v.values)
    return (
        ValueFunction(spec.state_grid, new_v),
        Policy(spec.state_grid, pol, spec.action_grid),
    )


def value_iterate(
    spec: ModelSpec,
    s: PopulationState,
    tol: float = DEFAULT_DP_TOL,
    warm_start: ValueFunction | None = None,
    max_iterations: int = 100_000,
) -> DpSolution:
    """Iterate the Bellman operator to within ``tol`` of the fixed point.

    Stops when the sup-norm difference between sweeps falls below
    tol * (1 - beta) / (2 beta), which bounds the distance of the returned
    values from the true fixed point by tol / 2.  The returned policy is
    greedy with respect to the returned values.  With beta = 0 the first
    sweep already is the myopic optimum, so the loop exits immediately.
    """
    beta = spec.discount
    tables = _DpTables(spec, s)
    if warm_start is not None:
        if warm_start.grid != spec.state_grid:
            raise GridMismatch("warm start grid does not match the spec")
        v = np.array(warm_start.values, dtype=float)
    else:
        v = np.zeros(spec.n_states)

    threshold = tol * (1.0 - beta) / (2.0 * beta) if beta > 0.0 else np.inf
    residuals = []
    for it in range(1, max_iterations + 1):
        new_v, _ = tables.sweep(v)
        d = float(np.max(np.abs(new_v - v)))
        residuals.append(d)
        v = new_v
        if d <= threshold:
            break
    else:
        raise MaxIterationsExceeded(
            f"value iteration did not reach tolerance in {max_iterations} sweeps",
            residual=residuals[-1] if residuals else None,
            iterations=max_iterations,
        )

    greedy_v, pol = tables.sweep(v)
    log.debug("value iteration converged in %d sweeps (residual %.3e)", it, residuals[-1])
    return DpSolution(
        value=ValueFunction(spec.state_grid, v),
        policy=Policy(spec.state_grid, pol, spec.action_grid),
        iterations=it,
        residuals=np.asarray(residuals),
    )


@dataclass(frozen=True)
class PolicyReport:
    """Structural checks of solved policies across aggregator-ordered probes.

    All three checks run on the transformed policy (the spec's
    ``policy_transform``, or raw action values when none is given) and allow
    one action cell of slack, since a grid argmax can sit one cell off the
    continuous optimum.
    """

    monotone_in_x: bool
    monotone_violations: tuple
    decreasing_in_s: bool
    decreasing_violations: tuple
    lipschitz_ok: bool | None
    lipschitz_max: float | None
    lipschitz_bound: float | None
    probe_aggregates: tuple
    transformed_policies: tuple


def _transformed_policy(spec: ModelSpec, policy: Policy) -> np.ndarray:
    coords = spec.state_grid.node_coords()
    x = coords[0] if spec.state_grid.ndim == 1 else coords
    a_val = policy.action_values
    if spec.policy_transform is None:
        return np.asarray(a_val, dtype=float)
    return np.broadcast_to(
        np.asarray(spec.policy_transform(x, a_val), dtype=float), (spec.n_states,)
    ).copy()


def _action_cell_slack(spec: ModelSpec, policy: Policy) -> np.ndarray:
    """Per-node transform change from moving the chosen action one grid cell."""
    coords = spec.state_grid.node_coords()
    x = coords[0] if spec.state_grid.ndim == 1 else coords
    grid_a = spec.action_grid
    idx = policy.action_index
    if grid_a.size == 1:
        return np.zeros(spec.n_states)
    up = np.minimum(idx + 1, grid_a.size - 1)
    dn = np.maximum(idx - 1, 0)

    def tr(ai):
        vals = grid_a[ai]
        if spec.policy_transform is None:
            return np.asarray(vals, dtype=float)
        return np.broadcast_to(
            np.asarray(spec.policy_transform(x, vals), dtype=float), (spec.n_states,)
        )

    base = tr(idx)
    return np.maximum(np.abs(tr(up) - base), np.abs(tr(dn) - base))


def policy_structure_report(
    spec: ModelSpec,
    probes,
    tol: float = DEFAULT_DP_TOL,
    atol: float = 1e-9,
) -> PolicyReport:
    """Solve the decision problem at each probe and check policy structure.

    Probes must be ordered by the aggregator (weakly increasing H), else
    UnorderedProbes is raised.  Checks: the transformed policy is
    nondecreasing in the state at every probe, pointwise nonincreasing as the
    probe aggregate rises, and (when the spec claims a Lipschitz bound)
    adjacent-node slopes stay within the bound.  Each check tolerates one
    action cell of slack.
    """
    aggs = [aggregator_value(spec, s) for s in probes]
    if len(probes) < 2:
        raise UnorderedProbes("need at least two probe populations")
    if any(b < a - 1e-12 for a, b in zip(aggs, aggs[1:])):
        raise UnorderedProbes(f"probe aggregates {aggs} are not weakly increasing")

    solved = []
    warm = None
    for s in probes:
        sol = value_iterate(spec, s, tol=tol, warm_start=warm)
        warm = sol.value
        solved.append(sol)

    mu = [_transformed_policy(spec, sol.policy) for sol in solved]
    slack = [_action_cell_slack(spec, sol.policy) for sol in solved]

    shape = spec.state_grid.shape
    mono_viol = []
    lips_max = 0.0
    lips_viol = False
    dx_axis0 = np.diff(spec.state_grid.axes[0])
    for pi, (m_flat, sl_flat) in enumerate(zip(mu, slack)):
        m2 = m_flat.reshape(shape) if spec.state_grid.ndim == 2 else m_flat.reshape(-1, 1)
        s2 = sl_flat.reshape(shape) if spec.state_grid.ndim == 2 else sl_flat.reshape(-1, 1)
        step = m2[1:, :] - m2[:-1, :]
        allow = np.maximum(s2[1:, :], s2[:-1, :]) + atol
        bad = np.argwhere(step < -allow)
        for i, j in bad:
            mono_viol.append(
                {"probe": pi, "node": (int(i), int(j)), "drop": float(-step[i, j])}
            )
        if spec.lipschitz_bound is not None and spec.state_grid.ndim == 1:
            ratio = step[:, 0] / dx_axis0
            lips_max = max(lips_max, float(np.max(np.abs(ratio))))
            allowed = spec.lipschitz_bound + (s2[1:, 0] + s2[:-1, 0]) / dx_axis0 + atol
            if np.any(np.abs(ratio) > allowed):
                lips_viol = True

    dec_viol = []
    for pi in range(len(probes) - 1):
        rise = mu[pi + 1] - mu[pi]
        allow = np.maximum(slack[pi], slack[pi + 1]) + atol
        bad = np.argwhere(rise > allow)
        for (i,) in bad:
            dec_viol.append(
                {"probe_pair": (pi, pi + 1), "node": int(i), "rise": float(rise[i])}
            )

    has_bound = spec.lipschitz_bound is not None and spec.state_grid.ndim == 1
    return PolicyReport(
        monotone_in_x=not mono_viol,
        monotone_violations=tuple(mono_viol),
        decreasing_in_s=not dec_viol,
        decreasing_violations=tuple(dec_viol),
        lipschitz_ok=(not lips_viol) if has_bound else None,
        lipschitz_max=lips_max if has_bound else None,
        lipschitz_bound=spec.lipschitz_bound if has_bound else None,
        probe_aggregates=tuple(aggs),
        transformed_policies=tuple(mu),
    )
