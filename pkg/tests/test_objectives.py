import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adtradeoffs import kernels
from adtradeoffs.errors import ConfigError, NotImplementableError, UnsupportedRuleError
from adtradeoffs.objectives import (
    LOWEST_SNE_GSP,
    TRUTHFUL,
    BidderModel,
    EstimatorConfig,
    MetricsRecord,
    Scenario,
    batch_rng,
    estimate_metrics,
    obj_value,
    outcome_metrics,
    sample_types,
    simulate,
)
from adtradeoffs.position_auction import (
    BidderProfile,
    ImpressionReserve,
    OptimalPsi,
    Standard,
    Subtractive,
    TwoParam,
    allocate,
    gsp_payments,
    lowest_sne_bids,
    priced_outcome,
    truthful_payments,
)
from adtradeoffs.valuations import ObjectiveWeights, ValueDistribution

U01 = ValueDistribution.uniform(0, 1)
ONE = Scenario([BidderModel(U01)], [1.0])
EIGHT = Scenario([BidderModel(U01, U01, count=8)], [1.0, 0.6, 0.36])


class TestOutcomeMetrics:
    def test_empty(self):
        out = priced_outcome(Standard(2.0), [BidderProfile(1.0)], [1.0])
        assert outcome_metrics(out) == MetricsRecord(0, 0, 0, 0)

    def test_single(self):
        out = priced_outcome(Standard(0.4), [BidderProfile(1.0)], [1.0])
        assert outcome_metrics(out).as_array() == pytest.approx([0.4, 1, 1, 1])

    def test_two_bidders(self):
        bidders = [BidderProfile(3), BidderProfile(2)]
        out = allocate(Standard(0), bidders, [1.0, 0.5])
        out.prices = np.array([1.5, 1.0])
        assert outcome_metrics(out).as_array() == pytest.approx([2.0, 4.0, 1.5, 2])

    def test_weighted_clicks_use_own_effect(self):
        bidders = [BidderProfile(3, 1.0), BidderProfile(2, 2.0)]
        out = priced_outcome(Standard(0), bidders, [1.0, 0.5])
        # bidder 1 has score 4 and takes slot 1; bidder 0 takes slot 2
        assert outcome_metrics(out).clicks == pytest.approx(2.0 * 1.0 + 1.0 * 0.5)

    def test_needs_prices(self):
        out = allocate(Standard(0), [BidderProfile(1.0)], [1.0])
        with pytest.raises(ValueError):
            outcome_metrics(out)


class TestObjValue:
    M = MetricsRecord(2, 4, 1.5, 2)

    @pytest.mark.parametrize("w,expected", [((1, 0, 0), 2), ((0, 1, 0), 4), ((1, 1, 1), 7.5)])
    def test_weights(self, w, expected):
        assert obj_value(ObjectiveWeights(*w), self.M) == pytest.approx(expected)


class TestEstimateMetrics:
    def test_single_bidder_reserve_closed_form(self):
        mean, se = estimate_metrics(ONE, Standard(0.5), TRUTHFUL, EstimatorConfig(10**6, 3))
        # revenue E[0.5 * 1{t >= 0.5}] = 0.25, welfare E[t 1{t >= 0.5}] = 0.375
        assert abs(mean.revenue - 0.25) <= 3 * se.revenue
        assert abs(mean.welfare - 0.375) <= 3 * se.welfare
        assert abs(mean.impressions - 0.5) <= 3 * se.impressions

    def test_reserve_above_support(self):
        mean, se = estimate_metrics(EIGHT, Standard(2.0), TRUTHFUL, EstimatorConfig(5000, 1))
        assert np.all(mean.as_array() == 0)
        assert np.all(se.as_array() == 0)

    def test_two_uniform_bidders_second_price(self):
        sc = Scenario([BidderModel(U01, count=2)], [1.0])
        mean, se = estimate_metrics(sc, Standard(0), TRUTHFUL, EstimatorConfig(200_000, 5))
        # E[min] = 1/3, E[max] = 2/3
        assert abs(mean.revenue - 1 / 3) <= 3 * se.revenue
        assert abs(mean.welfare - 2 / 3) <= 3 * se.welfare

    def test_myerson_optimal_revenue(self):
        sc = Scenario([BidderModel(U01, count=2)], [1.0])
        rule = OptimalPsi(ObjectiveWeights(1, 0, 0), U01)
        mean, se = estimate_metrics(sc, rule, TRUTHFUL, EstimatorConfig(200_000, 6))
        assert abs(mean.revenue - 5 / 12) <= 3 * se.revenue

    def test_nonlinear_rule_truthful_only(self):
        sc = Scenario([BidderModel(ValueDistribution.beta(2, 2), count=2)], [1.0])
        rule = OptimalPsi(ObjectiveWeights(1, 0, 0), ValueDistribution.beta(2, 2))
        mean, _ = estimate_metrics(sc, rule, TRUTHFUL, EstimatorConfig(2000, 0))
        assert mean.revenue > 0
        with pytest.raises(UnsupportedRuleError):
            estimate_metrics(sc, rule, LOWEST_SNE_GSP, EstimatorConfig(2000, 0))

    def test_unknown_pricing(self):
        with pytest.raises(ConfigError):
            estimate_metrics(ONE, Standard(0), "vcg", EstimatorConfig(10, 0))

    def test_deterministic_across_workers(self):
        est = [EstimatorConfig(20_000, 9, 1000, k) for k in (1, 4, 8)]
        rows = [estimate_metrics(EIGHT, TwoParam(0.1, 0.05), LOWEST_SNE_GSP, e) for e in est]
        for r in rows[1:]:
            assert r == rows[0]

    def test_revenue_equivalence_at_lowest_sne(self):
        # the lowest equilibrium charges the truthful prices on every draw
        for rule in (Subtractive(0.2), ImpressionReserve(0.1), TwoParam(0.1, 0.05)):
            a, _ = estimate_metrics(EIGHT, rule, TRUTHFUL, EstimatorConfig(5000, 2))
            b, _ = estimate_metrics(EIGHT, rule, LOWEST_SNE_GSP, EstimatorConfig(5000, 2))
            assert np.allclose(a.as_array(), b.as_array(), rtol=1e-10, atol=1e-12)


class TestConfig:
    def test_estimator_validation(self):
        for kw in ({"samples": 0}, {"batch": 0}, {"workers": 0}, {"seed": -1}):
            with pytest.raises(ConfigError):
                EstimatorConfig(**kw)

    def test_batches(self):
        est = EstimatorConfig(samples=10, batch=4)
        assert est.n_batches == 3
        assert [est.batch_size(j) for j in range(3)] == [4, 4, 2]

    def test_bidder_model_validation(self):
        with pytest.raises(ConfigError):
            BidderModel(U01, correlation=1.5)
        with pytest.raises(ConfigError):
            BidderModel(U01, weight=0.0)
        with pytest.raises(ConfigError):
            Scenario([], [1.0])


def test_copula_correlation():
    sc = Scenario([BidderModel(ValueDistribution.lognormal(0, 1), ValueDistribution.lognormal(0, 0.5),
                               correlation=0.8)], [1.0])
    t, w = sample_types(sc, 50_000, batch_rng(0, 0))
    assert np.corrcoef(np.log(t[:, 0]), np.log(w[:, 0]))[0, 1] == pytest.approx(0.8, abs=0.03)


def _library_rows(rule, t, w, slots, pricing):
    rows = []
    for k in range(t.shape[0]):
        types = [(t[k, i], w[k, i]) for i in range(t.shape[1])]
        bidders = [BidderProfile(a, b) for a, b in types]
        if pricing == TRUTHFUL:
            out = allocate(rule, bidders, slots)
            out.prices = truthful_payments(rule, bidders, slots)
        else:
            bids = lowest_sne_bids(rule, types, slots)
            out = allocate(rule, bidders, slots, bids)
            out.prices = gsp_payments(rule, bidders, slots, bids)
        rows.append(outcome_metrics(out).as_array())
    return np.array(rows)


@pytest.mark.parametrize("rule", [Standard(0.0), Standard(0.3), Subtractive(0.2),
                                  ImpressionReserve(0.1), TwoParam(0.15, 0.05)])
@pytest.mark.parametrize("pricing", [TRUTHFUL, LOWEST_SNE_GSP])
def test_kernel_matches_library(rule, pricing):
    t, w = sample_types(EIGHT, 300, batch_rng(4, 0))
    sim = simulate(EIGHT, rule, pricing, t, w)
    keep = []
    for k in range(t.shape[0]):
        try:
            if pricing == LOWEST_SNE_GSP:
                lowest_sne_bids(rule, list(zip(t[k], w[k])), EIGHT.slots)
            keep.append(k)
        except NotImplementableError:
            pass
    lib = _library_rows(rule, t[keep], w[keep], EIGHT.slots, pricing)
    assert np.allclose(sim[keep], lib, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("mode", [kernels.TRUTHFUL, kernels.LOWEST_SNE_GSP])
def test_compiled_and_numpy_kernels_agree(mode):
    t, w = sample_types(EIGHT, 2000, batch_rng(8, 0))
    args = (t, w, np.ones(8), np.full(8, 0.1), np.full(8, 0.1), 0.02, EIGHT.slots.array, mode)
    assert np.allclose(kernels.simulate_linear(*args), kernels.simulate_linear_py(*args),
                       rtol=1e-12, atol=1e-12)


@given(st.floats(0.0, 0.9), st.floats(0.0, 0.5))
@settings(max_examples=20, deadline=None)
def test_metrics_bounded(r, rho):
    mean, _ = estimate_metrics(EIGHT, TwoParam(r, rho), TRUTHFUL, EstimatorConfig(500, 1))
    assert 0 <= mean.revenue <= mean.welfare + 1e-12
    assert 0 <= mean.impressions <= 3
    assert mean.clicks <= 1 + 0.6 + 0.36
