"""Per-auction metrics and Monte Carlo estimates of the stakeholder measures.

Four measures are tracked for every auction: revenue, advertiser welfare
(value of the clicks received), click yield and impression yield.  The scalar
objective combines the first three with :class:`ObjectiveWeights`.

Monte Carlo estimates split the requested sample count into fixed-size batches.
Batch ``j`` draws from its own stream ``SeedSequence(seed, spawn_key=(j,))``, so
the estimate depends only on ``(seed, batch)`` and not on how many worker
threads evaluate the batches.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

from . import kernels
from .errors import ConfigError, DomainError, UnsupportedRuleError
from .position_auction import (AuctionOutcome, OptimalPsi, RankingRule, SlotLayout,
                               as_slots)
from .valuations import ObjectiveWeights, ValueDistribution

TRUTHFUL = "truthful"
LOWEST_SNE_GSP = "lowest-sne-gsp"
PRICINGS = (TRUTHFUL, LOWEST_SNE_GSP)
_MODE = {TRUTHFUL: kernels.TRUTHFUL, LOWEST_SNE_GSP: kernels.LOWEST_SNE_GSP}


@dataclass(frozen=True)
class MetricsRecord:
    """Expected per-auction revenue, welfare, clicks and impressions."""

    revenue: float = 0.0
    welfare: float = 0.0
    clicks: float = 0.0
    impressions: float = 0.0

    FIELDS = ("revenue", "welfare", "clicks", "impressions")

    def as_array(self) -> np.ndarray:
        return np.array([self.revenue, self.welfare, self.clicks, self.impressions])

    @classmethod
    def from_array(cls, a) -> "MetricsRecord":
        a = np.asarray(a, float)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class EstimatorConfig:
    samples: int = 10_000
    seed: int = 0
    batch: int = 8192
    workers: int = 1

    def __post_init__(self):
        if int(self.samples) < 1:
            raise ConfigError("samples must be at least 1")
        if int(self.batch) < 1:
            raise ConfigError("batch must be at least 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def n_batches(self) -> int:
        return -(-int(self.samples) // int(self.batch))

    def batch_size(self, j: int) -> int:
        return min(int(self.batch), int(self.samples) - j * int(self.batch))


WeightSpec = Union[float, ValueDistribution]


@dataclass(frozen=True)
class BidderModel:
    """Joint law of one bidder's value ``t`` and ad effect ``w``.

    ``correlation`` couples the two marginals through a Gaussian copula; it is
    ignored when the weight is fixed.  ``count`` repeats the model.
    """

    value: ValueDistribution
    weight: WeightSpec = 1.0
    correlation: float = 0.0
    count: int = 1

    def __post_init__(self):
        if not -1.0 <= self.correlation <= 1.0:
            raise ConfigError(f"correlation {self.correlation} outside [-1, 1]")
        if int(self.count) < 1:
            raise ConfigError("count must be at least 1")
        if not isinstance(self.weight, ValueDistribution) and not float(self.weight) > 0:
            raise ConfigError("a fixed weight must be positive")


@dataclass(frozen=True)
class Scenario:
    bidders: tuple[BidderModel, ...]
    slots: SlotLayout
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        object.__setattr__(self, "slots", as_slots(self.slots))
        if not self.bidders:
            raise ConfigError("a scenario needs at least one bidder model")

    def expanded(self) -> list[BidderModel]:
        """One model per bidder, with ``count`` unrolled."""
        return [m for m in self.bidders for _ in range(int(m.count))]

    @property
    def n_bidders(self) -> int:
        return sum(int(m.count) for m in self.bidders)

    def value_models(self) -> list[ValueDistribution]:
        return [m.value for m in self.expanded()]


def sample_types(scenario: Scenario, n: int, rng: np.random.Generator):
    """Draw ``n`` auctions; returns ``(t, w)`` arrays of shape ``(n, bidders)``."""
    models = scenario.expanded()
    z = rng.standard_normal((n, len(models), 2))
    t = np.empty((n, len(models)))
    w = np.empty((n, len(models)))
    for i, m in enumerate(models):
        z_t, z_w = z[:, i, 0], z[:, i, 1]
        t[:, i] = m.value.ppf(special.ndtr(z_t))
        if isinstance(m.weight, ValueDistribution):
            rho = m.correlation
            z_w = rho * z_t + np.sqrt(1.0 - rho * rho) * z_w
            w[:, i] = m.weight.ppf(special.ndtr(z_w))
        else:
            w[:, i] = float(m.weight)
    return t, w


def batch_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(j),)))


def outcome_metrics(outcome: AuctionOutcome, bidders=None) -> MetricsRecord:
    """Metrics of one priced outcome; ``bidders`` defaults to the outcome's own."""
    if bidders is None:
        bidders = outcome.bidders
    if not outcome.assignment:
        return MetricsRecord()
    if outcome.prices is None:
        raise ValueError("outcome has no prices")
    rev = wel = clk = 0.0
    effects = outcome.effects
    for k, i in outcome.assignment.items():
        clicks = bidders[i].w * effects[i]
        clk += clicks
        wel += bidders[i].t * clicks
        rev += outcome.prices[i] * clicks
    return MetricsRecord(rev, wel, clk, float(len(outcome.assignment)))


def obj_value(weights: ObjectiveWeights, m: MetricsRecord) -> float:
    return weights.alpha * m.revenue + weights.beta * m.welfare + weights.gamma * m.clicks


def _linear_arrays(rule: RankingRule, n: int):
    forms = [rule.linear_form(i) for i in range(n)]
    if any(f is None for f in forms):
        return None
    rho = {f[3] for f in forms}
    if len(rho) != 1:
        return None
    a, c, r = (np.array([f[k] for f in forms], float) for k in range(3))
    return a, c, r, rho.pop()


def _simulate_nonlinear(rule: OptimalPsi, t, w, slots: np.ndarray) -> np.ndarray:
    """Truthful auctions for a rule whose scores are not affine in the bid."""
    N, n = t.shape
    K = slots.size
    score = np.empty((N, n))
    elig = np.empty((N, n), bool)
    for i in range(n):
        score[:, i], elig[:, i] = rule.score_array(t[:, i], w[:, i], i)
    key = np.where(elig, -score, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    S = np.take_along_axis(score, order, 1)
    n_elig = elig.sum(axis=1)
    n_shown = np.minimum(n_elig, K)
    s_ext = np.append(slots, 0.0)
    out = np.zeros((N, 4))
    rows = np.arange(N)
    for k in range(min(K, n)):
        valid = k < n_shown
        if not valid.any():
            break
        bidder = order[:, k]
        total = np.zeros(N)
        for i in np.unique(bidder[valid]):
            sel = valid & (bidder == i)
            wi = w[sel, i]
            fl = rule.floor(1.0, i)
            acc = np.zeros(sel.sum())
            for m in range(k, K):
                j = m + 1
                tau = np.full(acc.shape, fl)
                if j < n:
                    has = j < n_elig[sel]
                    if has.any():
                        thr = rule.inverse(S[sel, j][has], wi[has], i)
                        tau[has] = np.maximum(thr, fl)
                acc += (s_ext[m] - s_ext[m + 1]) * tau
            total[sel] = acc / slots[k]
        b = order[:, k]
        clicks = np.where(valid, w[rows, b] * slots[k], 0.0)
        out[:, 0] += total * clicks
        out[:, 1] += t[rows, b] * clicks
        out[:, 2] += clicks
    out[:, 3] = n_shown
    return out


def simulate(scenario: Scenario, rule: RankingRule, pricing: str, t, w) -> np.ndarray:
    """Per-auction ``[revenue, welfare, clicks, impressions]`` rows for given draws."""
    if pricing not in PRICINGS:
        raise ConfigError(f"unknown pricing {pricing!r}; expected one of {PRICINGS}")
    slots = scenario.slots.array
    lin = _linear_arrays(rule, t.shape[1])
    if lin is not None:
        a, c, r, rho = lin
        return kernels.simulate_linear(t, w, a, c, r, rho, slots, _MODE[pricing])
    if pricing != TRUTHFUL:
        raise UnsupportedRuleError(
            f"{type(rule).__name__} with non-affine scores supports truthful pricing only")
    return _simulate_nonlinear(rule, t, w, slots)


def _check_rule(scenario: Scenario, rule: RankingRule, pricing: str) -> None:
    if pricing not in PRICINGS:
        raise ConfigError(f"unknown pricing {pricing!r}; expected one of {PRICINGS}")
    n = scenario.n_bidders
    if _linear_arrays(rule, n) is None and pricing != TRUTHFUL:
        raise UnsupportedRuleError(
            f"{type(rule).__name__} with non-affine scores supports truthful pricing only")
    if isinstance(rule, OptimalPsi):
        models = rule.models
        if isinstance(models, Sequence) and len(models) != n:
            raise DomainError(f"rule has {len(models)} value models for {n} bidders")


def simulate_batches(scenario: Scenario, rule: RankingRule, pricing: str,
                     est: EstimatorConfig) -> np.ndarray:
    """All per-auction rows, batch by batch in seed order."""
    _check_rule(scenario, rule, pricing)

    def run(j: int) -> np.ndarray:
        t, w = sample_types(scenario, est.batch_size(j), batch_rng(est.seed, j))
        return simulate(scenario, rule, pricing, t, w)

    jobs = range(est.n_batches)
    if est.workers > 1 and est.n_batches > 1:
        with ThreadPoolExecutor(max_workers=int(est.workers)) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def summarize(rows: np.ndarray) -> tuple[MetricsRecord, MetricsRecord]:
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(4)
    return MetricsRecord.from_array(mean), MetricsRecord.from_array(se)


def estimate_metrics(scenario: Scenario, rule: RankingRule, pricing: str = TRUTHFUL,
                     est: EstimatorConfig | None = None) -> tuple[MetricsRecord, MetricsRecord]:
    """Monte Carlo mean and standard error of the per-auction metrics.

    Bids equal types under ``"truthful"``; under ``"lowest-sne-gsp"`` bidders
    play the lowest symmetric equilibrium and pay GSP prices.
    """
    est = est or EstimatorConfig()
    return summarize(simulate_batches(scenario, rule, pricing, est))
