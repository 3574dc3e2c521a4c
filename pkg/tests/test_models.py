"""The five packaged model families: parameter guards and frozen oracles."""

import numpy as np
import pytest

from mfe_lab import (
    MODEL_BUILDERS,
    InvalidParams,
    NonPositiveCapital,
    PopulationState,
    advertising_model,
    aiyagari_model,
    aiyagari_prices,
    capacity_model,
    quality_ladder_model,
    reputation_model,
    validate_model,
)
from mfe_lab.models import _chain_common_shocks


def test_builder_registry_covers_all_families():
    assert set(MODEL_BUILDERS) == {
        "capacity",
        "quality_ladder",
        "advertising",
        "reputation",
        "aiyagari",
    }
    for name, (params_cls, builder) in MODEL_BUILDERS.items():
        spec = builder()
        assert spec.name == name
        assert spec.params == params_cls().__dict__ | spec.params  # defaults echoed


def test_all_families_validate_clean():
    for _, builder in MODEL_BUILDERS.values():
        report = validate_model(builder())
        assert report.passed, (builder.__name__, report.violation_names())


# ------------------------------------------------------------------ capacity


def test_capacity_grid_top_is_the_exact_sustained_cap():
    spec = capacity_model()
    top = spec.state_grid.axes[0][-1]
    assert top == pytest.approx(8.25, abs=1e-12)
    # ((1-delta) * top + k(a_max)) * z_max returns exactly to top
    k_max = 0.1 + 1.0  # kappa0 + kappa1 * a_max^eta
    assert ((1 - 0.3) * top + k_max) * 1.2 == pytest.approx(top, abs=1e-12)


def test_capacity_rejects_unbounded_dynamics():
    with pytest.raises(InvalidParams) as exc_info:
        capacity_model(delta=0.05)  # (1 - 0.05) * 1.2 >= 1: no finite cap
    assert any("unbounded" in v for v in exc_info.value.violations)


def test_capacity_rejects_flat_investment():
    with pytest.raises(InvalidParams) as exc_info:
        capacity_model(kappa0=0.0)
    assert any("not positive at zero" in v for v in exc_info.value.violations)


def test_capacity_rejects_convex_investment():
    with pytest.raises(InvalidParams) as exc_info:
        capacity_model(eta=1.5)
    assert any("concave" in v for v in exc_info.value.violations)


def test_capacity_rejects_non_straddling_shocks():
    with pytest.raises(InvalidParams) as exc_info:
        capacity_model(shock_values=(1.1, 1.2), shock_probs=(0.5, 0.5))
    assert any("straddle" in v for v in exc_info.value.violations)


def test_capacity_rejects_bad_demand():
    with pytest.raises(InvalidParams):
        capacity_model(gamma=-0.1)
    with pytest.raises(InvalidParams):
        capacity_model(alpha=0.0)


# --------------------------------------------------------------- advertising


def test_advertising_population_couples_states_and_actions():
    spec = advertising_model()
    assert spec.coupling == "states-and-actions"
    assert spec.population_grid.ndim == 2
    assert spec.population_grid.shape == (60, 41)
    np.testing.assert_array_equal(spec.population_grid.axes[1], spec.action_grid)


def test_advertising_grid_top_is_the_exact_sustained_cap():
    spec = advertising_model()
    top = spec.state_grid.axes[0][-1]
    assert top == pytest.approx(15.75, abs=1e-12)
    assert (1 - 0.3) * (top + 3.0) * 1.2 == pytest.approx(top, abs=1e-12)


def test_advertising_aggregator_oracle():
    spec = advertising_model(gamma2=0.5)
    g = spec.population_grid
    # all mass on (x = top, a = a_max): H = (top + a_max)^gamma2
    s = PopulationState.dirac(g, g.n - 1)
    assert spec.aggregator(s) == pytest.approx((15.75 + 3.0) ** 0.5, rel=1e-12)


def test_advertising_requires_positive_action_floor():
    with pytest.raises(InvalidParams):
        advertising_model(a_min=0.0)


# ---------------------------------------------------------------- reputation


def test_reputation_grid_and_restart():
    spec = reputation_model()
    assert spec.state_grid.ndim == 2
    np.testing.assert_array_equal(spec.state_grid.axes[1], np.arange(11, dtype=float))
    prob, point = spec.regeneration
    assert prob == pytest.approx(1.0 - 0.85, abs=1e-15)
    assert point == (0.0, 0.0)


def test_reputation_review_count_axis_is_exact():
    spec = reputation_model()
    s = PopulationState.uniform(spec.population_grid)
    x1 = np.array([2.5, 5.0])
    x2 = np.array([3.0, 10.0])
    _, nxt2 = spec.transition((x1, x2), np.array([0.5, 0.5]), s, 1.0)
    np.testing.assert_array_equal(nxt2, [4.0, 10.0])  # count caps at m2


def test_reputation_rejects_fractional_review_cap():
    with pytest.raises(InvalidParams):
        reputation_model(m2=7.5)


# ------------------------------------------------------------------ aiyagari


def test_price_oracles():
    # alpha = 0.5, delta_k = 0.1, tfp = 1: closed forms are easy to hand-check
    assert aiyagari_prices(1.0, alpha=0.5, delta_k=0.1, tfp=1.0) == pytest.approx(
        (1.4, 0.5), abs=1e-15
    )
    assert aiyagari_prices(4.0, alpha=0.5, delta_k=0.1, tfp=1.0) == pytest.approx(
        (1.15, 1.0), abs=1e-15
    )


def test_prices_satisfy_the_product_exhaustion_identity():
    for k in (0.3, 1.0, 2.7, 8.0):
        gross, wage = aiyagari_prices(k)
        output = 1.2 * k**0.36
        assert (gross - 1.0 + 0.1) * k + wage == pytest.approx(output, rel=1e-12)


def test_prices_reject_nonpositive_capital():
    with pytest.raises(NonPositiveCapital):
        aiyagari_prices(0.0)
    with pytest.raises(NonPositiveCapital):
        aiyagari_prices(-1.0)


def test_labor_chain_partition_reproduces_rows_exactly():
    rows = np.array([[0.9, 0.1], [0.1, 0.9]])
    mids, probs = _chain_common_shocks(rows)
    np.testing.assert_allclose(mids, (0.05, 0.5, 0.95), atol=1e-15)
    np.testing.assert_allclose(probs, (0.1, 0.8, 0.1), atol=1e-15)
    # inverse-CDF sampling through the shared draw recovers each row
    for i in range(2):
        cdf = np.cumsum(rows[i])
        mass = np.zeros(2)
        for u, p in zip(mids, probs):
            mass[np.searchsorted(cdf, u)] += p
        np.testing.assert_allclose(mass, rows[i], atol=1e-15)


def test_aiyagari_transition_matches_the_labor_chain():
    spec = aiyagari_model()
    s = PopulationState.uniform(spec.population_grid)
    for i, x2 in enumerate((0.2, 1.8)):
        mass = {0.2: 0.0, 1.8: 0.0}
        for zeta, prob in zip(spec.shocks.values, spec.shocks.probs):
            _, nxt = spec.transition(
                (np.array([1.0]), np.array([x2])), np.array([1.0]), s, zeta
            )
            mass[float(nxt[0])] += float(prob)
        assert mass[0.2] == pytest.approx([0.9, 0.1][i], abs=1e-15)
        assert mass[1.8] == pytest.approx([0.1, 0.9][i], abs=1e-15)


def test_aiyagari_savings_equal_the_chosen_action():
    spec = aiyagari_model()
    s = PopulationState.uniform(spec.population_grid)
    a = np.array([0.0, 4.0, 8.0])
    nxt1, _ = spec.transition((a * 0, np.full(3, 0.2)), a, s, spec.shocks.values[0])
    np.testing.assert_array_equal(nxt1, a)


def test_aiyagari_feasible_set_tracks_the_budget():
    spec = aiyagari_model()
    g = spec.population_grid
    s = PopulationState.dirac(g, 0)  # K floors at k_min: high gross return
    gross, wage = aiyagari_prices(spec.params["k_min"])
    lo, hi = spec.feasible((np.array([0.0, 8.0]), np.array([0.2, 0.2])), s)
    budgets = gross * np.array([0.0, 8.0]) + wage * 0.2
    savings = spec.state_grid.axes[0]
    for b, h in zip(budgets, hi):
        assert savings[h] <= b + 1e-9
        if h + 1 < savings.size:
            assert savings[h + 1] > b
    assert np.all(lo == 0)


def test_aiyagari_log_utility_at_unit_sigma():
    spec = aiyagari_model(sigma=1.0)
    s = PopulationState.uniform(spec.population_grid)
    gross, wage = aiyagari_prices(spec.aggregator(s))
    got = spec.payoff((np.array([2.0]), np.array([1.8])), np.array([1.0]), s)
    assert got[0] == pytest.approx(np.log(gross * 2.0 + wage * 1.8 - 1.0), rel=1e-12)


def test_aiyagari_rejects_bad_labor_chain():
    with pytest.raises(InvalidParams):
        aiyagari_model(labor_transition=((0.9, 0.2), (0.1, 0.9)))
    with pytest.raises(InvalidParams):
        aiyagari_model(labor_values=(1.8, 0.2))
