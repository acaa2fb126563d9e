"""Constrained trade-offs: impression caps, Pareto frontiers and duality checks."""
from .adcap import (AdCapProblem, AdCapSolution, AdCapTerm, enumerate_threshold_policies,
                    expected_impressions, solve_ad_cap)
from .discrete import DiscreteBidder, DiscreteInstance, random_regular_instance
from .duality import (EQ, GE, DualityResult, LinearConstraint, dual_function,
                      duality_gap_check, slater_margin, unconstrained_optimum)
from .frontier import (ConcavityVerdict, FrontierPoint, build_frontier, concavity_check,
                       dominates, evaluate_grid, pareto_filter)
