import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from adtradeoffs.errors import NotImplementableError, UnsupportedRuleError
from adtradeoffs.position_auction import (
    BidderProfile,
    ImpressionReserve,
    LinearScore,
    OptimalPsi,
    SlotLayout,
    Standard,
    Subtractive,
    TwoParam,
    allocate,
    gsp_payments,
    lowest_sne_bids,
    priced_outcome,
    score,
    truthful_payments,
    verify_sne,
)
from adtradeoffs.valuations import ObjectiveWeights, ValueDistribution

U01 = ValueDistribution.uniform(0, 1)
THREE = [BidderProfile(3), BidderProfile(2), BidderProfile(1)]
TWO_SLOTS = SlotLayout((1.0, 0.5))


def threshold_oracle(rule, bidders, slots, i):
    """Myerson price of bidder i by enumerating the bids where its slot changes."""
    bids = [p.b for p in bidders]
    w = bidders[i].w
    cands = {rule.floor(w, i)}
    for j, p in enumerate(bidders):
        if j != i:
            s, ok = rule.score(bids[j], p.w, j)
            if ok:
                cands.add(float(rule.inverse(s, w, i)))
    cands = sorted(c for c in cands if np.isfinite(c) and c <= bids[i] + 1e-12)

    def effect(b):
        trial = list(bids)
        trial[i] = b
        return allocate(rule, bidders, slots, trial).effects[i]

    x_own = effect(bids[i])
    if x_own == 0:
        return 0.0
    pay, prev = 0.0, 0.0
    for c in cands:
        # ties go to the lower index, so probe just above the threshold
        x = effect(min(c + 1e-9, bids[i]))
        if x > prev:
            pay += c * (x - prev)
            prev = x
    return pay / x_own


class TestScore:
    def test_standard(self):
        assert score(Standard(0.3), 0.5, 2) == (pytest.approx(1.0), True)

    def test_subtractive_below_reserve(self):
        s, ok = score(Subtractive(0.5), 0.4, 1)
        assert s == pytest.approx(-0.1) and not ok

    def test_optimal_psi(self):
        s, ok = score(OptimalPsi(ObjectiveWeights(1, 0, 0), U01), 0.75, 1)
        assert s == pytest.approx(0.5) and ok

    def test_impression_reserve_scales_with_weight(self):
        assert score(ImpressionReserve(1.0), 0.6, 2) == (pytest.approx(1.2), True)
        assert score(ImpressionReserve(1.0), 0.6, 1)[1] is False

    def test_nonlinear_psi_inverse_round_trip(self):
        rule = OptimalPsi(ObjectiveWeights(1, 0, 0), ValueDistribution.beta(2, 2))
        assert not rule.is_linear
        s, _ = rule.score(0.8, 1.5)
        assert float(rule.inverse(s, 1.5)) == pytest.approx(0.8, abs=1e-9)

    def test_linear_score_needs_positive_slope(self):
        with pytest.raises(UnsupportedRuleError):
            LinearScore(a=0.0)


class TestAllocate:
    def test_sort_order(self):
        out = allocate(Standard(0), THREE, TWO_SLOTS)
        assert out.assignment == {0: 0, 1: 1}
        assert list(out.effects) == [1.0, 0.5, 0.0]

    def test_impression_reserve_filters(self):
        out = allocate(ImpressionReserve(2.5), THREE, TWO_SLOTS)
        assert out.assignment == {0: 0}

    def test_tie_to_lower_index(self):
        out = allocate(Standard(0), [BidderProfile(2), BidderProfile(2)], TWO_SLOTS)
        assert out.assignment == {0: 0, 1: 1}

    def test_weights_change_order(self):
        out = allocate(Standard(0), [BidderProfile(3, 1), BidderProfile(2, 2)], TWO_SLOTS)
        assert out.assignment == {0: 1, 1: 0}

    def test_empty_bidders(self):
        with pytest.raises(ValueError):
            allocate(Standard(0), [], TWO_SLOTS)

    def test_slot_validation(self):
        with pytest.raises(ValueError):
            SlotLayout((0.5, 1.0))
        with pytest.raises(ValueError):
            SlotLayout(())


class TestTruthfulPayments:
    def test_three_bidders(self):
        p = truthful_payments(Standard(0), THREE, TWO_SLOTS)
        assert p[:2] == pytest.approx([1.5, 1.0])
        assert p[2] == 0
        for i in (0, 1):
            assert p[i] == pytest.approx(threshold_oracle(Standard(0), THREE, TWO_SLOTS, i))

    def test_single_bidder_reserve(self):
        assert truthful_payments(Standard(0.4), [BidderProfile(1)], [1.0])[0] == pytest.approx(0.4)

    def test_impression_reserve_floor(self):
        rule = ImpressionReserve(1.2)
        p = truthful_payments(rule, THREE, TWO_SLOTS)
        assert p[0] == pytest.approx(1.6)
        assert p[1] == pytest.approx(1.2)
        for i in (0, 1):
            assert p[i] == pytest.approx(threshold_oracle(rule, THREE, TWO_SLOTS, i))


class TestGspPayments:
    def test_classic(self):
        assert gsp_payments(Standard(0), THREE, TWO_SLOTS)[:2] == pytest.approx([2.0, 1.0])

    def test_subtractive(self):
        assert gsp_payments(Subtractive(0.5), THREE, TWO_SLOTS)[:2] == pytest.approx([2.0, 1.0])

    def test_single_eligible_pays_reserve(self):
        assert gsp_payments(Standard(0.4), [BidderProfile(1)], [1.0])[0] == pytest.approx(0.4)

    def test_weighted(self):
        bidders = [BidderProfile(3, 1), BidderProfile(2, 2), BidderProfile(1, 1)]
        p = gsp_payments(Standard(0), bidders, TWO_SLOTS)
        # bidder 1 (score 4) pays 3*1/2; bidder 0 (score 3) pays 1*1/1
        assert p == pytest.approx([1.0, 1.5, 0.0])

    def test_priced_outcome(self):
        out = priced_outcome(Standard(0), THREE, TWO_SLOTS, "truthful")
        assert out.prices[:2] == pytest.approx([1.5, 1.0])
        m = out.metrics
        assert m.revenue == pytest.approx(2.0)
        assert m.impressions == 2


class TestLowestSne:
    def test_three_bidders(self):
        b = lowest_sne_bids(Standard(0), [(3, 1), (2, 1), (1, 1)], TWO_SLOTS)
        assert b == pytest.approx([3, 1.5, 1])
        g = gsp_payments(Standard(0), THREE, TWO_SLOTS, b)
        assert g == pytest.approx(truthful_payments(Standard(0), THREE, TWO_SLOTS))

    def test_single_bidder(self):
        assert lowest_sne_bids(Standard(0), [(0.7, 1)], [1.0]) == pytest.approx([0.7])

    def test_weighted(self):
        types = [(3, 2), (2, 1), (1, 1)]
        b = lowest_sne_bids(Standard(0), types, TWO_SLOTS)
        bidders = [BidderProfile(t, w) for t, w in types]
        assert gsp_payments(Standard(0), bidders, TWO_SLOTS, b) == pytest.approx(
            truthful_payments(Standard(0), bidders, TWO_SLOTS), abs=1e-9)

    def test_nonlinear_rule_rejected(self):
        rule = OptimalPsi(ObjectiveWeights(1, 0, 0), ValueDistribution.beta(2, 2))
        with pytest.raises(UnsupportedRuleError):
            lowest_sne_bids(rule, [(0.9, 1), (0.8, 1)], TWO_SLOTS)

    def test_standard_reserve_not_implementable(self):
        # the lower bidder would need to bid under r to set the truthful price above
        types = [(100, 1), (0.5, 10)]
        with pytest.raises(NotImplementableError):
            lowest_sne_bids(Standard(0.4), types, TWO_SLOTS)
        b = lowest_sne_bids(Standard(0.4), types, TWO_SLOTS, strict=False)
        assert b[1] == pytest.approx(0.4)


class TestVerifySne:
    def test_lowest_sne_ok(self):
        b = lowest_sne_bids(Standard(0), [(3, 1), (2, 1), (1, 1)], TWO_SLOTS)
        assert verify_sne(Standard(0), [(3, 1), (2, 1), (1, 1)], b, TWO_SLOTS)

    def test_envy_violation(self):
        v = verify_sne(Standard(0), [(3, 1), (2, 1), (1, 1)], [3, 2.9, 1], TWO_SLOTS,
                       conservative=False)
        # 0.5 * (3 - 1) = 1 > 1 * (3 - 2.9) = 0.1
        assert not v
        assert "bidder 0 envies bidder 1" in v.message

    def test_overbid_rejected_when_conservative(self):
        v = verify_sne(Standard(0), [(3, 1), (2, 1), (1, 1)], [3, 2.9, 1], TWO_SLOTS)
        assert not v and "exceeds" in v.message

    def test_all_zero_below_reserve(self):
        assert verify_sne(Standard(0.5), [(0.3, 1), (0.2, 1)], [0, 0], TWO_SLOTS)

    def test_truthful_bids_not_equilibrium(self):
        # top bidder pays 2.5 for 0.5 surplus but 0.5 * (3 - 1) = 1 in slot 2
        v = verify_sne(Standard(0), [(3, 1), (2.5, 1), (1, 1)], [3, 2.5, 1], TWO_SLOTS)
        assert not v and "envies" in v.message


RULES = st.one_of(
    st.builds(Standard, st.just(0.0)),
    st.builds(Subtractive, st.floats(0, 0.5)),
    st.builds(ImpressionReserve, st.floats(0, 0.5)),
    st.builds(TwoParam, st.floats(0, 0.3), st.floats(0, 0.3)),
)


@st.composite
def instances(draw):
    n = draw(st.integers(1, 5))
    k = draw(st.integers(1, 4))
    types = [(draw(st.floats(0.05, 2.0)), draw(st.floats(0.2, 2.0))) for _ in range(n)]
    eff = sorted((draw(st.floats(0.1, 1.0)) for _ in range(k)), reverse=True)
    return types, SlotLayout(tuple(eff))


@given(RULES, instances())
@settings(max_examples=150, deadline=None)
def test_gsp_at_lowest_sne_equals_truthful(rule, inst):
    types, slots = inst
    # exact score ties or equal slot effects let the index tie-break reorder the equilibrium
    scores = [t * w for t, w in types]
    assume(len(set(scores)) == len(scores))
    assume(len(set(slots.effects)) == len(slots))
    bids = lowest_sne_bids(rule, types, slots)
    bidders = [BidderProfile(t, w) for t, w in types]
    assert allocate(rule, bidders, slots, bids).assignment == allocate(rule, bidders, slots).assignment
    assert np.allclose(gsp_payments(rule, bidders, slots, bids),
                       truthful_payments(rule, bidders, slots), atol=1e-9)


@given(RULES, instances())
@settings(max_examples=100, deadline=None)
def test_truthful_prices_bounded_by_bid_and_gsp(rule, inst):
    types, slots = inst
    bidders = [BidderProfile(t, w) for t, w in types]
    tp = truthful_payments(rule, bidders, slots)
    gp = gsp_payments(rule, bidders, slots)
    out = allocate(rule, bidders, slots)
    for i in out.slot_of:
        assert tp[i] <= bidders[i].t + 1e-9
        assert tp[i] <= gp[i] + 1e-9


@given(RULES, instances(), st.data())
@settings(max_examples=80, deadline=None)
def test_truthful_prices_match_threshold_oracle(rule, inst, data):
    types, slots = inst
    bidders = [BidderProfile(t, w) for t, w in types]
    tp = truthful_payments(rule, bidders, slots)
    i = data.draw(st.integers(0, len(bidders) - 1))
    assert tp[i] == pytest.approx(threshold_oracle(rule, bidders, slots, i), abs=1e-6)


@given(RULES, instances(), st.data())
@settings(max_examples=80, deadline=None)
def test_allocation_monotone_in_own_bid(rule, inst, data):
    types, slots = inst
    bidders = [BidderProfile(t, w) for t, w in types]
    i = data.draw(st.integers(0, len(bidders) - 1))
    grid = np.linspace(0, 3, 61)
    eff = []
    for b in grid:
        bids = [p.b for p in bidders]
        bids[i] = b
        eff.append(allocate(rule, bidders, slots, bids).effects[i])
    assert np.all(np.diff(eff) >= 0)
