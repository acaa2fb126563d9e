import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adtradeoffs.constrained import (
    EQ,
    GE,
    AdCapProblem,
    AdCapTerm,
    DiscreteBidder,
    DiscreteInstance,
    FrontierPoint,
    LinearConstraint,
    build_frontier,
    concavity_check,
    dominates,
    duality_gap_check,
    dual_function,
    enumerate_threshold_policies,
    expected_impressions,
    pareto_filter,
    random_regular_instance,
    solve_ad_cap,
    unconstrained_optimum,
)
from adtradeoffs.errors import DomainError
from adtradeoffs.objectives import BidderModel, EstimatorConfig, MetricsRecord, Scenario
from adtradeoffs.position_auction import ImpressionReserve, SlotLayout, Standard
from adtradeoffs.valuations import ObjectiveWeights, ValueDistribution

U01 = ValueDistribution.uniform(0, 1)
WELFARE = ObjectiveWeights(0, 1, 0)
REVENUE = ObjectiveWeights(1, 0, 0)


def uniform_problem(theta):
    return AdCapProblem([AdCapTerm(1.0, 1.0, [BidderModel(U01)], WELFARE)], theta)


class TestDiscreteBidder:
    def test_virtual_values(self):
        b = DiscreteBidder((1.0, 2.0), (0.5, 0.5))
        # phi(1) = 1 - (2 - 1) * 0.5 / 0.5 = 0, phi(top) = top
        assert b.phi == pytest.approx([0.0, 2.0])

    def test_validation(self):
        with pytest.raises(DomainError):
            DiscreteBidder((2.0, 1.0), (0.5, 0.5))
        with pytest.raises(DomainError):
            DiscreteBidder((1.0, 2.0), (0.2, 0.2))
        with pytest.raises(DomainError):
            DiscreteBidder((1.0,), (1.0,), w=0)

    def test_random_instances_are_regular(self, rng):
        inst = random_regular_instance(rng, 3, 4, [1.0, 0.5])
        assert inst.is_regular
        assert inst.profile_prob.sum() == pytest.approx(1.0)

    def test_psi_allocation_is_monotone(self, rng):
        inst = random_regular_instance(rng, 2, 4, [1.0, 0.5])
        assert inst.is_monotone(inst.psi_allocation((1, 1, 0)))

    def test_rule_metrics_match_truthful_auction(self):
        # two bidders with one type each behave like a fixed auction
        inst = DiscreteInstance((DiscreteBidder((3.0,), (1.0,)), DiscreteBidder((2.0,), (1.0,))),
                                SlotLayout((1.0, 0.5)))
        m = inst.rule_metrics(Standard(0))
        # a single-type bidder is charged its whole value by threshold payments
        assert m.revenue == pytest.approx(3 * 1.0 + 2 * 0.5)
        assert m.welfare == pytest.approx(3 + 1)


class TestAdCap:
    def test_slack_cap_gives_zero_multiplier(self):
        sol = solve_ad_cap(uniform_problem(1.0), est=EstimatorConfig(20_000, 0))
        assert sol.lam == 0.0
        assert sol.slackness == 0.0

    def test_uniform_closed_form(self):
        sol = solve_ad_cap(uniform_problem(0.5), tol=1e-9, est=EstimatorConfig(200_000, 1))
        # show iff t >= lam, so Pr = 1 - lam = theta
        assert sol.lam == pytest.approx(0.5, abs=5e-3)
        assert sol.impressions == pytest.approx(0.5, abs=1e-4)
        assert abs(sol.slackness) <= 1e-4

    def test_expected_impressions_examples(self):
        p = uniform_problem(0.5)
        est = EstimatorConfig(200_000, 2)
        assert expected_impressions(p, 0.0, est) == pytest.approx(1.0)
        assert expected_impressions(p, 1e6, est) == 0.0
        assert expected_impressions(p, 0.25, est) == pytest.approx(0.75, abs=4e-3)

    def test_impressions_non_increasing(self):
        p = uniform_problem(0.5)
        vals = [expected_impressions(p, lam, EstimatorConfig(5000, 3)) for lam in np.linspace(0, 1.2, 25)]
        assert np.all(np.diff(vals) <= 0)

    def test_negative_multiplier(self):
        with pytest.raises(DomainError):
            expected_impressions(uniform_problem(0.5), -1.0)

    def test_problem_validation(self):
        term = AdCapTerm(0.5, 1.0, [BidderModel(U01)])
        with pytest.raises(DomainError):
            AdCapProblem([term], 0.5)
        with pytest.raises(DomainError):
            AdCapProblem([AdCapTerm(1.0, 1.0, [BidderModel(U01)])], 1.5)
        with pytest.raises(DomainError):
            AdCapTerm(1.0, 0.0, [BidderModel(U01)])

    def test_discrete_exact_tie_randomisation(self):
        b = DiscreteBidder((1.0, 2.0, 3.0), (0.3, 0.4, 0.3))
        p = AdCapProblem([AdCapTerm(1.0, 1.0, [b], WELFARE)], 0.5)
        sol = solve_ad_cap(p)
        assert sol.exact
        assert sol.impressions == pytest.approx(0.5, abs=1e-12)
        # the top type is always shown and the middle type half the time
        assert sol.lam == pytest.approx(2.0)
        assert sol.tie_prob == pytest.approx(0.5)
        assert sol.objective == pytest.approx(0.3 * 3 + 0.2 * 2)

    def test_matches_policy_enumeration(self, rng):
        for _ in range(5):
            terms = []
            q = rng.dirichlet([1, 1])
            for j in range(2):
                inst = random_regular_instance(rng, 2, 3, [1.0])
                terms.append(AdCapTerm(float(q[j]), float(rng.uniform(0.5, 1.0)), inst.bidders,
                                       ObjectiveWeights(*rng.uniform(0, 1, 3))))
            q_fix = 1.0 - terms[0].q
            terms[1] = AdCapTerm(q_fix, terms[1].s, terms[1].bidders, terms[1].weights)
            p = AdCapProblem(terms, float(rng.uniform(0.2, 0.8)))
            sol = solve_ad_cap(p)
            best, _ = enumerate_threshold_policies(p)
            assert sol.objective == pytest.approx(best, rel=1e-6)
            assert abs(sol.slackness) <= 1e-6


def binding_instance():
    inst = DiscreteInstance((DiscreteBidder((0.2, 0.5, 0.7, 1.0), (0.25, 0.25, 0.25, 0.25)),
                             DiscreteBidder((0.1, 0.4, 0.6, 0.9), (0.1, 0.3, 0.4, 0.2), 0.8)),
                            SlotLayout((1.0,)))
    lo = inst.metrics(inst.psi_allocation(REVENUE)).welfare
    hi = inst.metrics(inst.psi_allocation(WELFARE)).welfare
    return inst, lo, hi


class TestDuality:
    def test_no_constraints(self):
        inst, _, _ = binding_instance()
        res = duality_gap_check(inst, REVENUE, [])
        assert res.gap == pytest.approx(0.0, abs=1e-9)
        assert res.primal == pytest.approx(unconstrained_optimum(inst, REVENUE), abs=1e-9)

    def test_slack_constraint_zero_multiplier(self):
        inst, _, _ = binding_instance()
        opt = unconstrained_optimum(inst, REVENUE)
        res = duality_gap_check(inst, REVENUE, [LinearConstraint((1, 0, 0), 0.5 * opt)])
        assert res.gap == pytest.approx(0.0, abs=1e-9)
        assert res.lam == (0.0,)

    def test_binding_welfare_floor(self):
        inst, lo, hi = binding_instance()
        res = duality_gap_check(inst, REVENUE, [LinearConstraint((0, 1, 0), 0.5 * (lo + hi))])
        assert res.status == "optimal"
        assert res.dual >= res.primal - 1e-9
        assert res.gap <= 1e-6 * res.primal
        assert res.lam[0] > 0
        assert res.primal_metrics.welfare >= 0.5 * (lo + hi) - 1e-9

    def test_weak_duality_at_any_multiplier(self):
        inst, lo, hi = binding_instance()
        cons = [LinearConstraint((0, 1, 0), 0.5 * (lo + hi))]
        primal = duality_gap_check(inst, REVENUE, cons, refine=False).primal
        for lam in np.linspace(0, 5, 11):
            assert dual_function(inst, REVENUE, cons, [lam]) >= primal - 1e-9

    def test_infeasible(self):
        inst, _, hi = binding_instance()
        res = duality_gap_check(inst, REVENUE, [LinearConstraint((0, 1, 0), 2 * hi)])
        assert res.status == "infeasible"

    def test_boundary(self):
        inst, _, hi = binding_instance()
        res = duality_gap_check(inst, REVENUE, [LinearConstraint((0, 1, 0), hi)])
        assert res.status == "boundary"
        assert res.dual >= res.primal - 1e-9

    def test_equality_constraint(self):
        inst, lo, hi = binding_instance()
        res = duality_gap_check(inst, REVENUE, [LinearConstraint((0, 1, 0), 0.5 * (lo + hi), EQ)],
                                lambda_grid=np.linspace(-4, 4, 81))
        assert res.dual >= res.primal - 1e-9
        assert res.gap <= 1e-6 * abs(res.primal)

    def test_constraint_validation(self):
        with pytest.raises(DomainError):
            LinearConstraint((0, 0, 0), 1.0)
        with pytest.raises(DomainError):
            LinearConstraint((1, 0, 0), 1.0, "<=")


def fp(x, y, se=0.0):
    return FrontierPoint({"x": x}, MetricsRecord(revenue=y, impressions=x), MetricsRecord(revenue=se))


def dominance_oracle(points, axes=("impressions", "revenue"), maximize=(False, True)):
    return [p for p in points if not any(dominates(q, p, axes, maximize) for q in points)]


class TestFrontier:
    def test_single_point(self):
        assert pareto_filter([fp(1, 1)]) == [fp(1, 1)]

    def test_dominated_removed(self):
        assert pareto_filter([fp(1, 2), fp(2, 1)]) == [fp(1, 2)]

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=40))
    def test_matches_quadratic_oracle(self, pts):
        points = [fp(float(x), float(y)) for x, y in pts]
        got = pareto_filter(points)
        want = dominance_oracle(points)
        key = lambda p: (p.value("impressions"), p.value("revenue"))
        assert sorted(map(key, got)) == sorted(map(key, want))

    def test_build_frontier_uniform(self):
        sc = Scenario([BidderModel(U01, U01, count=8)], [1.0, 0.6, 0.36])
        grid = [{"rho": r} for r in np.linspace(0, 0.8, 9)]
        pts = build_frontier(sc, ImpressionReserve, grid, est=EstimatorConfig(4000, 0))
        assert pts
        assert all(not dominates(q, p, ("impressions", "revenue"), (False, True))
                   for p in pts for q in pts)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            build_frontier(None, Standard, [])


class TestConcavity:
    def test_collinear(self):
        assert concavity_check([fp(0, 0), fp(1, 1), fp(2, 2)], slack=0.0)

    def test_concave(self):
        assert concavity_check([fp(0, 0), fp(1, 2), fp(2, 3)], slack=0.0)

    def test_convex_violation(self):
        v = concavity_check([fp(0, 0), fp(1, 1), fp(2, 3)], slack=0.0)
        assert not v
        assert v.violations == [(1, 1.0, 1.5)]

    def test_noise_slack(self):
        pts = [fp(0, 0, 0.1), fp(1, 1.4, 0.1), fp(2, 3, 0.1)]
        assert concavity_check(pts)  # 3 combined standard errors absorb the 0.1 dip

    def test_needs_three_sorted_points(self):
        with pytest.raises(ValueError):
            concavity_check([fp(0, 0), fp(1, 1)])
        with pytest.raises(ValueError):
            concavity_check([fp(2, 0), fp(1, 1), fp(3, 1)])
