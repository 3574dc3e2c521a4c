"""Ready-made model families for the equilibrium laboratory.

Five families cover the solver's feature range: two scalar-state industry
models (capacity, quality ladder), an advertising model whose population
tracks state-action pairs, a two-axis reputation model with exogenous
restart mass, and a savings model with market-clearing capital prices.

Every constructor validates its parameters against the structural
conditions the ordering diagnostics rely on and raises InvalidParams
naming each violated condition.  Functional forms are checked numerically
on the grid rather than trusted: investment-cost curvature by finite
differences, and the payoff's cross-difference structure (spread between a
low and a high population shrinking as the state rises) at the extreme
Dirac populations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import InvalidParams, NonPositiveCapital
from .measure import Grid, PopulationState
from .model import (
    COUPLING_STATES_ACTIONS,
    ModelSpec,
    ShockDistribution,
    _eval_meshes,
    aggregator_value,
)

# ---------------------------------------------------------------------------
# shared validation helpers

def _investment_violations(kappa0, kappa1, eta, actions):
    """Finite-difference check of k(a) = kappa0 + kappa1 * a^eta on the grid."""
    bad = []
    if kappa0 <= 0:
        bad.append(f"investment impact not positive at zero: kappa0 = {kappa0!r}")
    if kappa1 <= 0 or eta <= 0:
        bad.append(f"investment impact not increasing: kappa1 = {kappa1!r}, eta = {eta!r}")
    if eta > 1:
        bad.append(f"investment impact not concave: eta = {eta!r}")
    if not bad and actions.size > 1:
        k = kappa0 + kappa1 * np.power(actions, eta)
        d1 = np.diff(k)
        if np.any(d1 <= 0):
            bad.append("investment impact not increasing on the action grid")
        if np.any(np.diff(d1) > 1e-12):
            bad.append("investment impact not concave on the action grid")
    return bad


def _shock_violations(values, probs, need_straddle, drift_gain=None):
    bad = []
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.asarray(probs, dtype=float).size != v.size:
        bad.append("shock values and probabilities differ in length")
        return bad
    if np.any(~np.isfinite(v)):
        bad.append("shock values not finite")
        return bad
    if v.size > 1 and np.any(np.diff(v) <= 0):
        bad.append("shock values not strictly increasing")
    if np.any(v <= 0):
        bad.append("shock values not positive")
    if need_straddle and not (v[0] < 1.0 and v[-1] > 1.0):
        bad.append(f"shocks do not straddle one: range [{v[0]!r}, {v[-1]!r}]")
    if drift_gain is not None and v[-1] * drift_gain >= 1.0:
        bad.append(
            "state space unbounded: persistence times the largest shock is "
            f"{drift_gain * v[-1]!r} >= 1"
        )
    return bad


def _structure_violations(spec: ModelSpec, rtol: float = 1e-9):
    """Payoff order structure at the extreme Dirac populations.

    Checks the aggregator rises from the lowest to the highest Dirac, the
    payoff falls pointwise as the population rises, and the fall steepens
    with the state (cross differences nonpositive along every state axis).
    """
    g = spec.population_grid
    s_lo = PopulationState.dirac(g, 0)
    s_hi = PopulationState.dirac(g, g.n - 1)
    bad = []
    if aggregator_value(spec, s_hi) < aggregator_value(spec, s_lo) - 1e-12:
        bad.append("aggregator not increasing from the lowest to the highest state")
    x, a = _eval_meshes(spec)
    n, m = spec.n_states, spec.n_actions
    p_lo = np.broadcast_to(np.asarray(spec.payoff(x, a, s_lo), dtype=float), (n, m))
    p_hi = np.broadcast_to(np.asarray(spec.payoff(x, a, s_hi), dtype=float), (n, m))
    d = p_hi - p_lo
    scale = max(float(np.max(np.abs(d))), 1.0)
    if np.any(d > rtol * scale):
        bad.append("payoff not decreasing in the population")
    d3 = d.reshape(spec.state_grid.shape + (m,))
    for ax in range(spec.state_grid.ndim):
        if np.any(np.diff(d3, axis=ax) > rtol * scale):
            bad.append("payoff cross differences not decreasing in the state")
            break
    return bad


def _merge_params(defaults, params, overrides):
    p = params if params is not None else defaults
    if overrides:
        try:
            p = replace(p, **overrides)
        except TypeError as exc:
            raise InvalidParams([f"unknown parameter: {exc}"]) from exc
    return p


# ---------------------------------------------------------------------------
# capacity and quality ladder (shared accumulation dynamics)

@dataclass(frozen=True)
class CapacityParams:
    """Linear inverse demand over total output, power investment impact."""

    beta: float = 0.9
    delta: float = 0.3
    d: float = 1.0
    kappa0: float = 0.1
    kappa1: float = 1.0
    eta: float = 0.5
    rho: float = 1.0
    q_shift: float = 0.0
    alpha: float = 1.0
    gamma: float = 0.06
    a_max: float = 1.0
    shock_values: tuple = (0.8, 1.2)
    shock_probs: tuple = (0.5, 0.5)
    n_states: int = 100
    n_actions: int = 101
    additive: bool = False
    x_cap: float | None = None


@dataclass(frozen=True)
class QualityLadderParams:
    """Share-of-index revenue with the same accumulation dynamics."""

    beta: float = 0.9
    delta: float = 0.3
    d: float = 1.0
    kappa0: float = 0.1
    kappa1: float = 1.0
    eta: float = 0.5
    theta1: float = 0.5
    c_tilde: float = 1.0
    a_max: float = 1.0
    shock_values: tuple = (0.8, 1.2)
    shock_probs: tuple = (0.5, 0.5)
    n_states: int = 100
    n_actions: int = 101
    additive: bool = False
    x_cap: float | None = None


def _accumulation_pieces(p, bad):
    """Grid, actions, shocks, transition, and drift transform shared by the
    capacity and quality models.

    Multiplicative mode: x' = ((1-delta)x + k(a)) * zeta, with the state cap
    solved from ((1-delta)x + k(ā)) zeta_max = x plus headroom, so no image
    ever escapes.  Additive mode (x' = (1-delta)x + k(a) + zeta, reflected
    into [0, x_cap]) goes beyond the multiplicative theory and needs the
    user to supply the reflecting bound.
    """
    if not 0.0 <= p.beta < 1.0:
        bad.append(f"discount out of range: beta = {p.beta!r}")
    if not 0.0 < p.delta < 1.0:
        bad.append(f"depreciation out of range: delta = {p.delta!r}")
    if p.d <= 0:
        bad.append(f"action cost not positive: d = {p.d!r}")
    if p.a_max <= 0:
        bad.append(f"action bound not positive: a_max = {p.a_max!r}")
    if p.n_states < 2 or p.n_actions < 2:
        bad.append(f"grid too small: n_states = {p.n_states}, n_actions = {p.n_actions}")
    if bad:
        raise InvalidParams(bad)

    actions = np.linspace(0.0, p.a_max, p.n_actions)
    bad += _investment_violations(p.kappa0, p.kappa1, p.eta, actions)

    def invest(a):
        return p.kappa0 + p.kappa1 * np.power(a, p.eta)

    if p.additive:
        if p.x_cap is None or p.x_cap <= 0:
            bad.append("additive dynamics need a positive reflecting bound x_cap")
        bad += _shock_violations(p.shock_values, p.shock_probs, need_straddle=False)
        if bad:
            raise InvalidParams(bad)
        x_hi = float(p.x_cap)

        def transition(x, a, s, zeta):
            return np.clip((1.0 - p.delta) * x + invest(a) + zeta, 0.0, x_hi)

    else:
        bad += _shock_violations(
            p.shock_values, p.shock_probs, need_straddle=True, drift_gain=1.0 - p.delta
        )
        if bad:
            raise InvalidParams(bad)
        z_max = float(max(p.shock_values))
        # smallest cap the dynamics never escape: ((1-delta)x + k(a_max))z_max <= x
        x_hi = invest(p.a_max) * z_max / (1.0 - (1.0 - p.delta) * z_max)

        def transition(x, a, s, zeta):
            return ((1.0 - p.delta) * x + invest(a)) * zeta

    grid = Grid(np.linspace(0.0, x_hi, p.n_states))
    shocks = ShockDistribution(p.shock_values, p.shock_probs)

    def drift(x, a_val):
        # Next-state drift before the shock; the structural Lipschitz claim
        # (slope at most 1 in x) is stated for this transform.
        return (1.0 - p.delta) * x + invest(a_val)

    return grid, actions, shocks, transition, drift


def capacity_model(params: CapacityParams | None = None, **overrides) -> ModelSpec:
    """Industry where the state is installed capacity, sold at a market price.

    Firms produce output q(x) = (x + q_shift)^rho at full capacity and the
    price is max(alpha - gamma * Q, 0) with Q the population's total output,
    so the aggregator is H(s) = integral of q.  Flow payoff is price * q(x)
    minus d * a; capacity accumulates as x' = ((1-delta)x + k(a)) * zeta
    with k(a) = kappa0 + kappa1 * a^eta.
    """
    p = _merge_params(CapacityParams(), params, overrides)
    bad = []
    if p.alpha <= 0:
        bad.append(f"demand intercept not positive: alpha = {p.alpha!r}")
    if p.gamma <= 0:
        bad.append(f"demand slope not positive: gamma = {p.gamma!r}")
    if not 0.0 < p.rho <= 1.0:
        bad.append(f"output exponent out of range: rho = {p.rho!r}")
    if p.q_shift < 0:
        bad.append(f"output shift negative: q_shift = {p.q_shift!r}")
    grid, actions, shocks, transition, drift = _accumulation_pieces(p, bad)

    def output(x):
        return np.power(x + p.q_shift, p.rho)

    def aggregator(s: PopulationState) -> float:
        return float(np.dot(output(s.grid.axes[0]), s.weights))

    def payoff(x, a, s):
        price = max(p.alpha - p.gamma * aggregator(s), 0.0)
        return price * output(x) - p.d * a

    spec = ModelSpec(
        name="capacity",
        state_grid=grid,
        action_grid=actions,
        payoff=payoff,
        transition=transition,
        shocks=shocks,
        discount=p.beta,
        aggregator=aggregator,
        policy_transform=drift,
        lipschitz_bound=1.0,
        params=asdict(p),
    )
    bad = _structure_violations(spec)
    if bad:
        raise InvalidParams(bad)
    return spec


def quality_ladder_model(params: QualityLadderParams | None = None, **overrides) -> ModelSpec:
    """Industry where revenue is a share of the population quality index.

    Flow payoff is c_tilde * (x+1)^theta1 / H(s) - d * a with the index
    H(s) = integral of (y+1)^theta1; when everyone sits at the same
    quality the ratio collapses to c_tilde.  Dynamics are the same
    accumulation process as the capacity model.
    """
    p = _merge_params(QualityLadderParams(), params, overrides)
    bad = []
    if not 0.0 < p.theta1 <= 1.0:
        bad.append(f"quality exponent out of range: theta1 = {p.theta1!r}")
    if p.c_tilde <= 0:
        bad.append(f"revenue scale not positive: c_tilde = {p.c_tilde!r}")
    grid, actions, shocks, transition, drift = _accumulation_pieces(p, bad)

    def index(x):
        return np.power(x + 1.0, p.theta1)

    def aggregator(s: PopulationState) -> float:
        return float(np.dot(index(s.grid.axes[0]), s.weights))

    def payoff(x, a, s):
        return p.c_tilde * index(x) / aggregator(s) - p.d * a

    spec = ModelSpec(
        name="quality_ladder",
        state_grid=grid,
        action_grid=actions,
        payoff=payoff,
        transition=transition,
        shocks=shocks,
        discount=p.beta,
        aggregator=aggregator,
        policy_transform=drift,
        lipschitz_bound=1.0,
        params=asdict(p),
    )
    bad = _structure_violations(spec)
    if bad:
        raise InvalidParams(bad)
    return spec


# ---------------------------------------------------------------------------
# advertising (population over state-action pairs)

@dataclass(frozen=True)
class AdvertisingParams:
    """Goodwill stock built jointly by the stock and the current spend."""

    beta: float = 0.9
    delta: float = 0.3
    r: float = 3.0
    gamma1: float = 0.5
    gamma2: float = 0.5
    a_min: float = 1.0
    a_max: float = 3.0
    shock_values: tuple = (0.8, 1.2)
    shock_probs: tuple = (0.5, 0.5)
    n_states: int = 60
    n_actions: int = 41


def advertising_model(params: AdvertisingParams | None = None, **overrides) -> ModelSpec:
    """Demand depends on rivals' goodwill and spend together, so the
    population lives on the state-action product grid.

    Payoff r * (x+a)^gamma1 / H(s) - a with the congestion term
    H(s) = (integral of (x'+a') ds)^gamma2 over state-action pairs, and
    goodwill x' = (1-delta)(x + a) * zeta.  The action floor stays
    strictly positive so both the demand numerator and H are bounded
    away from zero.
    """
    p = _merge_params(AdvertisingParams(), params, overrides)
    bad = []
    if not 0.0 <= p.beta < 1.0:
        bad.append(f"discount out of range: beta = {p.beta!r}")
    if not 0.0 < p.delta < 1.0:
        bad.append(f"depreciation out of range: delta = {p.delta!r}")
    if p.r <= 0:
        bad.append(f"revenue scale not positive: r = {p.r!r}")
    if not 0.0 < p.gamma1 <= 1.0:
        bad.append(f"demand exponent out of range: gamma1 = {p.gamma1!r}")
    if not 0.0 < p.gamma2 <= 1.0:
        bad.append(f"congestion exponent out of range: gamma2 = {p.gamma2!r}")
    if not 0.0 < p.a_min < p.a_max:
        bad.append(f"action bounds invalid: [{p.a_min!r}, {p.a_max!r}]")
    if p.n_states < 2 or p.n_actions < 2:
        bad.append(f"grid too small: n_states = {p.n_states}, n_actions = {p.n_actions}")
    bad += _shock_violations(
        p.shock_values, p.shock_probs, need_straddle=False, drift_gain=1.0 - p.delta
    )
    if bad:
        raise InvalidParams(bad)

    z_max = float(max(p.shock_values))
    gain = (1.0 - p.delta) * z_max
    # (1-delta)(x + a_max)z_max <= x pins the sustained cap
    x_hi = gain * p.a_max / (1.0 - gain)
    grid = Grid(np.linspace(0.0, x_hi, p.n_states))
    actions = np.linspace(p.a_min, p.a_max, p.n_actions)
    shocks = ShockDistribution(p.shock_values, p.shock_probs)

    def aggregator(s: PopulationState) -> float:
        xs, av = s.grid.node_coords()
        return float(np.dot(xs + av, s.weights)) ** p.gamma2

    def payoff(x, a, s):
        return p.r * np.power(x + a, p.gamma1) / aggregator(s) - a

    def transition(x, a, s, zeta):
        return (1.0 - p.delta) * (x + a) * zeta

    def drift(x, a_val):
        return (1.0 - p.delta) * (x + a_val)

    spec = ModelSpec(
        name="advertising",
        state_grid=grid,
        action_grid=actions,
        payoff=payoff,
        transition=transition,
        shocks=shocks,
        discount=p.beta,
        aggregator=aggregator,
        coupling=COUPLING_STATES_ACTIONS,
        policy_transform=drift,
        params=asdict(p),
    )
    bad = _structure_violations(spec)
    if bad:
        raise InvalidParams(bad)
    return spec


# ---------------------------------------------------------------------------
# reputation (ranking x review count, restart mass at the origin)

@dataclass(frozen=True)
class ReputationParams:
    """Average-review ranking with a hard review-count cap."""

    beta: float = 0.85
    d: float = 0.5
    kappa0: float = 0.1
    kappa1: float = 1.0
    eta: float = 0.5
    p_exp: float = 0.5
    q_exp: float = 0.5
    m1: float = 5.0
    m2: int = 10
    a_max: float = 1.0
    shock_values: tuple = (0.8, 1.1)
    shock_probs: tuple = (0.5, 0.5)
    n_ranking: int = 21
    n_actions: int = 21


def reputation_model(params: ReputationParams | None = None, **overrides) -> ModelSpec:
    """Seller ranking as a running average of effort, dying at rate 1 - beta.

    The state is (ranking, review count): a new review moves the ranking
    toward the effort k(a) with weight 1/(1+count) and the count up by one,
    both capped.  Attention nu = (1+x1)^p_exp (1+x2)^q_exp is sold against
    the population total, so payoff is nu/H(s) - d * a.  Exit and
    replacement at the origin enters the population kernel as restart mass
    1 - beta on (0, 0) in every row; the survivor's problem discounts at
    beta, which is why the continuation probability doubles as the
    discount factor.  The review-count axis uses exact integer nodes, so
    count updates never interpolate.
    """
    p = _merge_params(ReputationParams(), params, overrides)
    bad = []
    if not 0.0 < p.beta < 1.0:
        bad.append(f"discount out of range: beta = {p.beta!r}")
    if p.d <= 0:
        bad.append(f"action cost not positive: d = {p.d!r}")
    if not 0.0 < p.p_exp <= 1.0:
        bad.append(f"ranking exponent out of range: p_exp = {p.p_exp!r}")
    if not 0.0 < p.q_exp <= 1.0:
        bad.append(f"count exponent out of range: q_exp = {p.q_exp!r}")
    if p.m1 <= 0:
        bad.append(f"ranking cap not positive: m1 = {p.m1!r}")
    if int(p.m2) != p.m2 or p.m2 < 1:
        bad.append(f"review cap not a positive integer: m2 = {p.m2!r}")
    if p.a_max <= 0:
        bad.append(f"action bound not positive: a_max = {p.a_max!r}")
    if p.n_ranking < 2 or p.n_actions < 2:
        bad.append(f"grid too small: n_ranking = {p.n_ranking}, n_actions = {p.n_actions}")
    actions = np.linspace(0.0, p.a_max, p.n_actions)
    bad += _investment_violations(p.kappa0, p.kappa1, p.eta, actions)
    bad += _shock_violations(p.shock_values, p.shock_probs, need_straddle=False)
    if bad:
        raise InvalidParams(bad)

    m1 = float(p.m1)
    m2 = int(p.m2)
    grid = Grid(np.linspace(0.0, m1, p.n_ranking), np.arange(m2 + 1, dtype=float))
    shocks = ShockDistribution(p.shock_values, p.shock_probs)

    def invest(a):
        return p.kappa0 + p.kappa1 * np.power(a, p.eta)

    def attention(x1, x2):
        return np.power(1.0 + x1, p.p_exp) * np.power(1.0 + x2, p.q_exp)

    def aggregator(s: PopulationState) -> float:
        x1, x2 = s.grid.node_coords()
        return float(np.dot(attention(x1, x2), s.weights))

    def payoff(x, a, s):
        x1, x2 = x
        return attention(x1, x2) / aggregator(s) - p.d * a

    def transition(x, a, s, zeta):
        x1, x2 = x
        weight = x2 / (1.0 + x2)
        nxt1 = np.minimum((weight * x1 + invest(a) / (1.0 + x2)) * zeta, m1)
        nxt2 = np.minimum(x2 + 1.0, float(m2))
        return nxt1, nxt2

    def effort(x, a_val):
        return invest(a_val)

    spec = ModelSpec(
        name="reputation",
        state_grid=grid,
        action_grid=actions,
        payoff=payoff,
        transition=transition,
        shocks=shocks,
        discount=p.beta,
        aggregator=aggregator,
        regeneration=(1.0 - p.beta, (0.0, 0.0)),
        policy_transform=effort,
        params=asdict(p),
    )
    bad = _structure_violations(spec)
    if bad:
        raise InvalidParams(bad)
    return spec


# ---------------------------------------------------------------------------
# savings with market-clearing prices

@dataclass(frozen=True)
class AiyagariParams:
    """Savings under idiosyncratic labor risk and factor-market prices."""

    beta: float = 0.92
    sigma: float = 1.0
    alpha: float = 0.36
    tfp: float = 1.2
    delta_k: float = 0.1
    b_lo: float = 0.0
    b_hi: float = 8.0
    labor_values: tuple = (0.2, 1.8)
    labor_transition: tuple = ((0.9, 0.1), (0.1, 0.9))
    n_savings: int = 80
    c_floor: float = 1e-10
    k_min: float = 1e-2


def aiyagari_prices(capital: float, params: AiyagariParams | None = None, **overrides):
    """Factor prices from per-capita production tfp * K^alpha.

    Returns (R, w) with R the gross return 1 + alpha*tfp*K^(alpha-1) -
    delta_k and w the wage (1-alpha)*tfp*K^alpha; constant returns make
    tfp*K^alpha = (R - 1 + delta_k)*K + w an identity.
    """
    p = _merge_params(AiyagariParams(), params, overrides)
    if capital <= 0:
        raise NonPositiveCapital(f"capital must be positive, got {capital!r}")
    rate = p.alpha * p.tfp * capital ** (p.alpha - 1.0) - p.delta_k
    wage = (1.0 - p.alpha) * p.tfp * capital ** p.alpha
    return 1.0 + rate, wage


def _chain_common_shocks(rows: np.ndarray):
    """Represent a finite Markov chain by one shared uniform draw.

    Cutting (0,1) at every row's interior CDF values yields intervals on
    which every row's inverse CDF is constant; interval midpoints with
    interval lengths as probabilities reproduce each row exactly under
    inverse-CDF sampling.
    """
    cuts = sorted({float(c) for row in rows for c in np.cumsum(row)[:-1] if 0.0 < c < 1.0})
    edges = np.array([0.0] + cuts + [1.0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    probs = np.diff(edges)
    return tuple(mids.tolist()), tuple(probs.tolist())


def aiyagari_model(params: AiyagariParams | None = None, **overrides) -> ModelSpec:
    """Households choose next savings; prices clear against aggregate savings.

    The state is (savings, labor endowment); next savings equal the chosen
    action exactly (the action grid is the savings axis), labor follows its
    exogenous chain through a common uniform draw, and consumption is
    R*x1 + w*x2 - a at prices from aggregate capital K = H(s), floored at
    k_min so degenerate populations still price.  CRRA utility, log at
    sigma = 1.  Feasibility caps savings at cash on hand, so the feasible
    range depends on the population through prices.
    """
    p = _merge_params(AiyagariParams(), params, overrides)
    bad = []
    if not 0.0 <= p.beta < 1.0:
        bad.append(f"discount out of range: beta = {p.beta!r}")
    if p.sigma <= 0:
        bad.append(f"risk aversion not positive: sigma = {p.sigma!r}")
    if not 0.0 < p.alpha < 1.0:
        bad.append(f"capital share out of range: alpha = {p.alpha!r}")
    if p.tfp <= 0:
        bad.append(f"productivity not positive: tfp = {p.tfp!r}")
    if not 0.0 <= p.delta_k <= 1.0:
        bad.append(f"capital depreciation out of range: delta_k = {p.delta_k!r}")
    if not 0.0 <= p.b_lo < p.b_hi:
        bad.append(f"savings bounds invalid: [{p.b_lo!r}, {p.b_hi!r}]")
    if p.n_savings < 2:
        bad.append(f"grid too small: n_savings = {p.n_savings}")
    if p.k_min <= 0 or p.c_floor <= 0:
        bad.append("floors must be positive")
    labor = np.asarray(p.labor_values, dtype=float)
    rows = np.asarray(p.labor_transition, dtype=float)
    if labor.size < 1 or np.any(labor <= 0) or (labor.size > 1 and np.any(np.diff(labor) <= 0)):
        bad.append(f"labor values not positive and increasing: {p.labor_values!r}")
    if rows.shape != (labor.size, labor.size) or np.any(rows < 0) or np.any(
        np.abs(rows.sum(axis=1) - 1.0) > 1e-12
    ):
        bad.append(f"labor chain invalid: {p.labor_transition!r}")
    if bad:
        raise InvalidParams(bad)

    savings = np.linspace(p.b_lo, p.b_hi, p.n_savings)
    grid = Grid(savings, labor)
    shock_values, shock_probs = _chain_common_shocks(rows)
    shocks = ShockDistribution(shock_values, shock_probs)
    row_cdfs = np.cumsum(rows, axis=1)

    def aggregator(s: PopulationState) -> float:
        x1, _ = s.grid.node_coords()
        return max(float(np.dot(x1, s.weights)), p.k_min)

    def next_labor(x2, zeta):
        x2a = np.asarray(x2, dtype=float)
        rows_idx = np.searchsorted(labor, x2a.ravel()).reshape(x2a.shape)
        j = np.sum(row_cdfs[rows_idx] <= zeta, axis=-1)
        return labor[np.minimum(j, labor.size - 1)]

    def payoff(x, a, s):
        x1, x2 = x
        gross, wage = aiyagari_prices(aggregator(s), p)
        c = np.maximum(gross * x1 + wage * x2 - a, p.c_floor)
        if p.sigma == 1.0:
            return np.log(c)
        return np.power(c, 1.0 - p.sigma) / (1.0 - p.sigma)

    def transition(x, a, s, zeta):
        _, x2 = x
        nxt1 = np.asarray(a, dtype=float)
        return nxt1, next_labor(x2, zeta)

    def feasible(x, s):
        x1, x2 = x
        gross, wage = aiyagari_prices(aggregator(s), p)
        budget = gross * np.asarray(x1, dtype=float) + wage * np.asarray(x2, dtype=float)
        hi = np.searchsorted(savings, budget + 1e-12, side="right") - 1
        lo = np.zeros_like(hi)
        return lo, hi

    return ModelSpec(
        name="aiyagari",
        state_grid=grid,
        action_grid=savings,
        payoff=payoff,
        transition=transition,
        shocks=shocks,
        discount=p.beta,
        aggregator=aggregator,
        feasible=feasible,
        params=asdict(p),
    )


MODEL_BUILDERS = {
    "capacity": (CapacityParams, capacity_model),
    "quality_ladder": (QualityLadderParams, quality_ladder_model),
    "advertising": (AdvertisingParams, advertising_model),
    "reputation": (ReputationParams, reputation_model),
    "aiyagari": (AiyagariParams, aiyagari_model),
}
