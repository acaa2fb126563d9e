"""Rank-score sponsored-search auctions and their stakeholder trade-offs."""
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .objectives import (BidderModel, EstimatorConfig, MetricsRecord, Scenario,
                         estimate_metrics, obj_value, outcome_metrics)
from .position_auction import (BidderProfile, ImpressionReserve, OptimalPsi, SlotLayout,
                               Standard, Subtractive, TwoParam, allocate, gsp_payments,
                               lowest_sne_bids, truthful_payments, verify_sne)
from .valuations import ObjectiveWeights, ValueDistribution, psi_inverse_zero

__version__ = "0.1.0"
