"""Model primitives: shocks, the model contract, validation, type extension.

A ModelSpec bundles everything a solver needs: grids, payoff, transition,
feasibility, shocks, discount, and the scalar aggregator that summarizes the
population for payoffs and for comparative statics.  Payoff and transition
callables must be numpy-vectorized: they receive broadcastable arrays (the
state coordinate, or a pair of coordinate arrays on 2-D grids) and must
return an array of the broadcast shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GridMismatch, InvalidParams, MassSumViolation
from .measure import Grid, PopulationState

_PROB_TOL = 1e-12


class ShockDistribution:
    """Finite common shock distribution, identical across states and actions.

    ``values`` may hold scalars or tuples (a tuple is passed through to the
    transition unchanged); ``probs`` must be nonnegative and sum to one
    within 1e-12.
    """

    __slots__ = ("values", "probs")

    def __init__(self, values, probs):
        vals = tuple(
            tuple(float(c) for c in v) if isinstance(v, (tuple, list, np.ndarray)) else float(v)
            for v in values
        )
        p = np.asarray(probs, dtype=float).ravel().copy()
        if p.size != len(vals):
            raise MassSumViolation("shock values and probabilities differ in length")
        if p.size == 0:
            raise MassSumViolation("shock distribution is empty")
        if np.any(p < -_PROB_TOL) or not np.all(np.isfinite(p)):
            raise MassSumViolation("shock probabilities must be nonnegative and finite")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise MassSumViolation(f"shock probabilities sum to {p.sum()!r}, expected 1")
        for v in vals:
            flat = v if isinstance(v, tuple) else (v,)
            if not all(np.isfinite(c) for c in flat):
                raise MassSumViolation("shock values must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", p)

    def __setattr__(self, name, value):
        raise AttributeError("ShockDistribution is immutable")

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return zip(self.values, self.probs)

    def __repr__(self):
        pairs = ", ".join(f"{v}: {p:g}" for v, p in self)
        return f"ShockDistribution({pairs})"


COUPLING_STATES = "states"
COUPLING_STATES_ACTIONS = "states-and-actions"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Everything the dynamic program and population operators consume.

    Fields
    ------
    state_grid : Grid
        Nodes of the individual state space.
    action_grid : ndarray
        Sorted action values shared by every node.
    payoff : callable (x, a, s) -> array
        Flow payoff; ``x`` is a coordinate array (or pair of arrays for 2-D
        grids), ``a`` an action-value array, ``s`` a PopulationState on
        ``population_grid``.
    transition : callable (x, a, s, zeta) -> array or pair of arrays
        Next-state image under one shock realization.
    shocks : ShockDistribution
    discount : float in [0, 1)
    aggregator : callable (PopulationState) -> float
        Scalar population summary; must be increasing under stochastic
        dominance for the ordering diagnostics to be meaningful.
    feasible : callable (x, s) -> (lo_idx, hi_idx) or None
        Inclusive contiguous index range into ``action_grid`` per node; None
        means every action is feasible everywhere.
    coupling : "states" or "states-and-actions"
        What the population state tracks.  With action coupling the
        population lives on the product of state and action grids and the
        consistency operator places each node's mass on its policy action.
    regeneration : (prob, point) or None
        Exogenous per-period restart: with probability ``prob`` a position is
        redrawn at ``point`` regardless of play.  Enters the population
        kernel only; the decision problem discounts with ``discount``.
    policy_transform : callable (x, action_value) -> value, optional
        Monotone reparametrization of the policy (e.g. the next-state drift)
        used by the policy structure report.
    lipschitz_bound : float, optional
        Claimed Lipschitz constant of the transformed policy in x.
    params : dict
        Serializable constructor arguments, echoed into run artifacts.
    """

    name: str
    state_grid: Grid
    action_grid: np.ndarray
    payoff: Callable
    transition: Callable
    shocks: ShockDistribution
    discount: float
    aggregator: Callable
    feasible: Optional[Callable] = None
    coupling: str = COUPLING_STATES
    regeneration: Optional[tuple] = None
    policy_transform: Optional[Callable] = None
    lipschitz_bound: Optional[float] = None
    invariant_blocks: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.action_grid, dtype=float).ravel().copy()
        if a.size < 1 or (a.size > 1 and not np.all(np.diff(a) > 0)):
            raise InvalidParams("action grid must be nonempty and strictly increasing")
        a.setflags(write=False)
        object.__setattr__(self, "action_grid", a)
        if self.coupling not in (COUPLING_STATES, COUPLING_STATES_ACTIONS):
            raise InvalidParams(f"unknown coupling {self.coupling!r}")
        if self.coupling == COUPLING_STATES_ACTIONS and self.state_grid.ndim != 1:
            raise InvalidParams("action coupling requires a 1-D state grid")
        if self.regeneration is not None:
            prob, point = self.regeneration
            if not 0.0 <= prob < 1.0:
                raise InvalidParams("regeneration probability must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.state_grid.n

    @property
    def n_actions(self) -> int:
        return int(self.action_grid.size)

    @property
    def population_grid(self) -> Grid:
        """Grid the population state lives on (product grid under action coupling)."""
        if self.coupling == COUPLING_STATES_ACTIONS:
            return Grid(self.state_grid.axes[0], self.action_grid)
        return self.state_grid

    def feasible_range(self, s: PopulationState):
        """Per-node inclusive (lo, hi) action index arrays."""
        n = self.n_states
        if self.feasible is None:
            return np.zeros(n, dtype=np.intp), np.full(n, self.n_actions - 1, dtype=np.intp)
        coords = self.state_grid.node_coords()
        x = coords[0] if self.state_grid.ndim == 1 else coords
        lo, hi = self.feasible(x, s)
        lo = np.broadcast_to(np.asarray(lo, dtype=np.intp), (n,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=np.intp), (n,)).copy()
        return lo, hi


@dataclass(frozen=True)
class Violation:
    """One failed model check."""

    name: str
    message: str

    def __str__(self):
        return f"{self.name}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple
    checked_probes: int

    def violation_names(self):
        return [v.name for v in self.violations]


def default_probes(spec: ModelSpec):
    """Dirac at the lowest node, uniform, Dirac at the highest node."""
    g = spec.population_grid
    return [
        PopulationState.dirac(g, 0),
        PopulationState.uniform(g),
        PopulationState.dirac(g, g.n - 1),
    ]


def aggregator_value(spec: ModelSpec, s: PopulationState) -> float:
    """Evaluate the spec's aggregator, checking the grid matches."""
    if s.grid != spec.population_grid:
        raise GridMismatch("population state lives on a different grid than the spec expects")
    return float(spec.aggregator(s))


def _eval_meshes(spec: ModelSpec):
    coords = spec.state_grid.node_coords()
    if spec.state_grid.ndim == 1:
        x = coords[0].reshape(-1, 1)
    else:
        x = tuple(c.reshape(-1, 1) for c in coords)
    a = spec.action_grid.reshape(1, -1)
    return x, a


def validate_model(spec: ModelSpec, probes=None) -> ValidationReport:
    """Check the standing numeric requirements of a spec at probe populations.

    Verifies the discount range, shock probability mass, feasible-set
    nonemptiness, payoff finiteness on the feasible set, transition-range
    containment for every feasible action and shock, and aggregator
    finiteness.  Returns a report listing every violation found.
    """
    violations = []
    if probes is None:
        probes = default_probes(spec)

    if not 0.0 <= spec.discount < 1.0:
        violations.append(Violation("discount out of range", f"discount = {spec.discount!r}"))
    psum = float(spec.shocks.probs.sum())
    if abs(psum - 1.0) > _PROB_TOL:
        violations.append(Violation("shock probabilities do not sum to one", f"sum = {psum!r}"))
    if spec.regeneration is not None:
        prob, point = spec.regeneration
        pt = tuple(np.atleast_1d(np.asarray(point, dtype=float)))
        for axis, (ax, c) in enumerate(zip(spec.state_grid.axes, pt)):
            if not np.any(np.abs(ax - c) <= 1e-12):
                violations.append(
                    Violation("regeneration point off grid", f"axis {axis} coordinate {c!r}")
                )

    x, a = _eval_meshes(spec)
    n, m = spec.n_states, spec.n_actions
    col = np.arange(m)

    for pi, s in enumerate(probes):
        try:
            lo, hi = spec.feasible_range(s)
        except Exception as exc:  # noqa: BLE001 - report, don't crash validation
            violations.append(Violation("feasible set evaluation failed", f"probe {pi}: {exc}"))
            continue
        if np.any(hi < lo):
            bad = int(np.argmax(hi < lo))
            violations.append(
                Violation("empty feasible set", f"probe {pi}, node {bad}: lo={lo[bad]}, hi={hi[bad]}")
            )
            continue
        mask = (col >= lo[:, None]) & (col <= hi[:, None])

        r = np.broadcast_to(np.asarray(spec.payoff(x, a, s), dtype=float), (n, m))
        if not np.all(np.isfinite(r[mask])):
            bad = np.argwhere(~np.isfinite(r) & mask)[0]
            violations.append(
                Violation("payoff not finite", f"probe {pi}, node {bad[0]}, action {bad[1]}")
            )

        for zeta, p in spec.shocks:
            if p == 0.0:
                continue
            img = spec.transition(x, a, s, zeta)
            imgs = img if isinstance(img, tuple) else (img,)
            for axis, (ax, im) in enumerate(zip(spec.state_grid.axes, imgs)):
                im = np.broadcast_to(np.asarray(im, dtype=float), (n, m))
                over = (im > ax[-1] + 1e-12) & mask
                under = (im < ax[0] - 1e-12) & mask
                if np.any(over) or np.any(under):
                    sel = over if np.any(over) else under
                    bad = np.argwhere(sel)[0]
                    violations.append(
                        Violation(
                            "transition escapes grid",
                            f"probe {pi}, shock {zeta!r}, axis {axis}, node {bad[0]}, "
                            f"action {bad[1]}: image {im[bad[0], bad[1]]!r} outside "
                            f"[{ax[0]!r}, {ax[-1]!r}]",
                        )
                    )
                    break

        try:
            h = aggregator_value(spec, s)
            if not np.isfinite(h):
                violations.append(Violation("aggregator not finite", f"probe {pi}: H = {h!r}"))
        except Exception as exc:  # noqa: BLE001
            violations.append(Violation("aggregator evaluation failed", f"probe {pi}: {exc}"))

    return ValidationReport(
        passed=not violations, violations=tuple(violations), checked_probes=len(probes)
    )


@dataclass(frozen=True)
class TypedModelFamily:
    """Finite collection of ex-ante types sharing grids, shocks, and discount.

    ``members`` hold one ModelSpec per type (payoffs and transitions may
    differ); ``masses`` is the exogenous type distribution, preserved exactly
    by the extended model's kernel since play never changes a type.
    """

    members: tuple
    masses: tuple

    def __post_init__(self):
        if len(self.members) < 1:
            raise InvalidParams("a typed family needs at least one member")
        if len(self.members) != len(self.masses):
            raise InvalidParams("one mass per member is required")
        m = np.asarray(self.masses, dtype=float)
        if np.any(m < 0) or abs(m.sum() - 1.0) > _PROB_TOL:
            raise MassSumViolation(f"type masses must be nonnegative and sum to 1, got {m.tolist()}")
        base = self.members[0]
        for k, spec in enumerate(self.members[1:], start=1):
            if spec.state_grid != base.state_grid:
                raise GridMismatch(f"member {k} has a different state grid")
            if not np.array_equal(spec.action_grid, base.action_grid):
                raise GridMismatch(f"member {k} has a different action grid")
            if spec.shocks.values != base.shocks.values or not np.array_equal(
                spec.shocks.probs, base.shocks.probs
            ):
                raise InvalidParams("members must share one shock distribution")
            if spec.discount != base.discount:
                raise InvalidParams("members must share one discount factor")
            if spec.coupling != COUPLING_STATES or spec.regeneration is not None:
                raise InvalidParams("typed extension supports plain state coupling only")
        if base.state_grid.ndim != 1:
            raise InvalidParams("typed extension supports 1-D base grids only")

    def extend(self) -> ModelSpec:
        return extend_with_types(self)


def extend_with_types(family: TypedModelFamily) -> ModelSpec:
    """Lift a typed family onto one grid indexed by (type, node).

    The extended state is the pair (type index, base state); transitions
    never move the type coordinate, payoffs dispatch on it, and both are
    evaluated at the type-marginalized population so every type interacts
    with the same aggregate.  The extended spec carries one invariant block
    per type so fixed-point routines conserve each type's exogenous mass.
    """
    if isinstance(family, (list, tuple)):
        raise InvalidParams("pass a TypedModelFamily (members plus masses)")
    members = family.members
    masses = tuple(float(m) for m in family.masses)
    base = members[0]
    k_types = len(members)
    type_axis = np.arange(k_types, dtype=float)
    ext_grid = Grid(type_axis, base.state_grid.axes[0])
    n_base = base.state_grid.n

    def marginalize(s: PopulationState) -> PopulationState:
        w = s.weights.reshape(k_types, n_base).sum(axis=0)
        total = w.sum()
        if total <= 0:
            raise MassSumViolation("population has no mass")
        return PopulationState(base.state_grid, w / total)

    def dispatch(fn_of_member, x, a, s, *rest):
        t, xb = x
        t_b, x_b, a_b = np.broadcast_arrays(
            np.asarray(t, dtype=float),
            np.asarray(xb, dtype=float),
            np.asarray(a, dtype=float),
        )
        out = np.empty(t_b.shape, dtype=float)
        s_base = marginalize(s)
        for idx, member in enumerate(members):
            sel = t_b == float(idx)
            if not np.any(sel):
                continue
            out[sel] = np.broadcast_to(
                np.asarray(fn_of_member(member)(x_b[sel], a_b[sel], s_base, *rest), dtype=float),
                x_b[sel].shape,
            )
        return out

    def payoff(x, a, s):
        return dispatch(lambda m: m.payoff, x, a, s)

    def transition(x, a, s, zeta):
        t, _ = x
        img = dispatch(lambda m: m.transition, x, a, s, zeta)
        t_b = np.broadcast_to(np.asarray(t, dtype=float), img.shape)
        return t_b, img

    feasible = None
    if any(m.feasible is not None for m in members):

        def feasible(x, s):  # noqa: F811 - deliberate conditional definition
            t, xb = x
            t_b, x_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xb, dtype=float))
            s_base = marginalize(s)
            lo = np.zeros(t_b.shape, dtype=np.intp)
            hi = np.full(t_b.shape, base.action_grid.size - 1, dtype=np.intp)
            for idx, member in enumerate(members):
                if member.feasible is None:
                    continue
                sel = t_b == float(idx)
                if not np.any(sel):
                    continue
                lo_m, hi_m = member.feasible(x_b[sel], s_base)
                lo[sel] = lo_m
                hi[sel] = hi_m
            return lo, hi

    def aggregator(s: PopulationState) -> float:
        return float(base.aggregator(marginalize(s)))

    transforms = [m.policy_transform for m in members]

    def policy_transform(x, a_val):
        t, xb = x
        t_b, x_b, a_b = np.broadcast_arrays(
            np.asarray(t, dtype=float),
            np.asarray(xb, dtype=float),
            np.asarray(a_val, dtype=float),
        )
        out = np.array(a_b, dtype=float, copy=True)
        for idx, tr in enumerate(transforms):
            if tr is None:
                continue
            sel = t_b == float(idx)
            if np.any(sel):
                out[sel] = tr(x_b[sel], a_b[sel])
        return out

    blocks = tuple(
        (slice(idx * n_base, (idx + 1) * n_base), masses[idx]) for idx in range(k_types)
    )
    return ModelSpec(
        name=f"typed[{', '.join(m.name for m in members)}]",
        state_grid=ext_grid,
        action_grid=base.action_grid,
        payoff=payoff,
        transition=transition,
        shocks=base.shocks,
        discount=base.discount,
        aggregator=aggregator,
        feasible=feasible,
        policy_transform=policy_transform if any(t is not None for t in transforms) else None,
        invariant_blocks=blocks,
        params={
            "members": [m.params for m in members],
            "member_names": [m.name for m in members],
            "masses": list(masses),
        },
    )
