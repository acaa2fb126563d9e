"""Single-template position auctions.

Ranking rules score a bid ``b`` of an ad with effect ``w``; eligible ads are
sorted by score (ties to the lower bidder index) and fill the slots top-down.
Prices are per click and quoted in the bidder's own bid space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NotImplementableError, UnsupportedRuleError
from .valuations import (
    LinearVirtual,
    ObjectiveWeights,
    ValueDistribution,
    ValueModel,
    psi_inverse_zero,
    psi_linear_coefficients,
    psi_values,
)

_INV_TOL = 1e-12


@dataclass(frozen=True)
class SlotLayout:
    effects: tuple[float, ...]

    def __post_init__(self):
        eff = tuple(float(e) for e in self.effects)
        object.__setattr__(self, "effects", eff)
        if not eff:
            raise ValueError("a slot layout needs at least one slot")
        if any(e <= 0 or not np.isfinite(e) for e in eff):
            raise ValueError("slot effects must be finite and positive")
        if any(a < b for a, b in zip(eff, eff[1:])):
            raise ValueError("slot effects must be non-increasing")

    def __len__(self) -> int:
        return len(self.effects)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.effects)


def as_slots(slots) -> SlotLayout:
    return slots if isinstance(slots, SlotLayout) else SlotLayout(tuple(slots))


@dataclass(frozen=True)
class BidderProfile:
    t: float
    w: float = 1.0
    b: float | None = None

    def __post_init__(self):
        if self.b is None:
            object.__setattr__(self, "b", float(self.t))
        if not (self.w > 0 and np.isfinite(self.w)):
            raise ValueError("ad effect w must be positive and finite")
        if not (self.t >= 0 and self.b >= 0 and np.isfinite(self.t) and np.isfinite(self.b)):
            raise ValueError("values and bids must be finite and non-negative")


def as_bidders(bidders) -> list[BidderProfile]:
    out = []
    for x in bidders:
        if isinstance(x, BidderProfile):
            out.append(x)
        elif isinstance(x, (tuple, list)):
            out.append(BidderProfile(*x))
        else:
            out.append(BidderProfile(float(x)))
    return out


# ---------------------------------------------------------------------------
# ranking rules
# ---------------------------------------------------------------------------

class RankingRule:
    """Scoring and eligibility of a bid.

    Linear rules score ``w * a_i * (b - c_i)`` and admit a bid iff
    ``b >= r_i`` and the score is at least ``rho``.
    """

    name = "rule"
    r: float = 0.0
    rho: float = 0.0

    def linear_form(self, i: int = 0) -> tuple[float, float, float, float] | None:
        """``(a, c, r, rho)`` for a linear rule, ``None`` otherwise."""
        raise NotImplementedError

    @property
    def is_linear(self) -> bool:
        return True

    def score(self, b: float, w: float, i: int = 0) -> tuple[float, bool]:
        s, e = self.score_array(np.asarray([b], float), w, i)
        return float(s[0]), bool(e[0])

    def score_array(self, b: np.ndarray, w, i: int = 0):
        a, c, r, rho = self.linear_form(i)
        s = w * a * (b - c)
        return s, (b >= r) & (s >= rho)

    def floor(self, w: float, i: int = 0) -> float:
        """Smallest eligible bid."""
        a, c, r, rho = self.linear_form(i)
        return max(r, c + rho / (w * a))

    def inverse(self, s, w, i: int = 0):
        """Bid whose score equals ``s`` (vectorised)."""
        a, c, _, _ = self.linear_form(i)
        return c + np.asarray(s, float) / (w * a)

    def params(self) -> dict:
        return {"r": self.r, "rho": self.rho}


@dataclass(frozen=True)
class Standard(RankingRule):
    r: float = 0.0
    name = "standard"

    def linear_form(self, i=0):
        return 1.0, 0.0, self.r, -np.inf


@dataclass(frozen=True)
class Subtractive(RankingRule):
    r: float = 0.0
    name = "subtractive"

    def linear_form(self, i=0):
        return 1.0, self.r, self.r, -np.inf


@dataclass(frozen=True)
class ImpressionReserve(RankingRule):
    rho: float = 0.0
    name = "impression"

    def linear_form(self, i=0):
        return 1.0, 0.0, -np.inf, self.rho


@dataclass(frozen=True)
class TwoParam(RankingRule):
    r: float = 0.0
    rho: float = 0.0
    name = "twoparam"

    def linear_form(self, i=0):
        return 1.0, self.r, self.r, self.rho


@dataclass(frozen=True)
class LinearScore(RankingRule):
    """Generic linear rule ``w a (b - c)`` with per-click floor ``r`` and score floor ``rho``."""

    a: float = 1.0
    c: float = 0.0
    r: float = -np.inf
    rho: float = -np.inf
    name = "linear"

    def __post_init__(self):
        if not self.a > 0:
            raise UnsupportedRuleError("the bid coefficient must be positive")

    def linear_form(self, i=0):
        return self.a, self.c, self.r, self.rho

    def params(self) -> dict:
        return {"a": self.a, "c": self.c, "r": self.r, "rho": self.rho}


@dataclass(frozen=True, eq=False)
class OptimalPsi(RankingRule):
    """Rank by ``w * psi_i(b)``; show an ad iff ``psi_i(b) >= 0``.

    ``models`` is one value model shared by all bidders or a sequence with one
    model per bidder index.
    """

    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    models: ValueModel | Sequence[ValueModel] | None = None
    name = "optimal"

    def model(self, i: int):
        m = self.models
        if m is None or isinstance(m, (ValueDistribution, LinearVirtual)):
            return m
        return m[i]

    @cached_property
    def _coef_cache(self) -> dict:
        return {}

    def _coef(self, i):
        cache = self._coef_cache
        if i not in cache:
            coef = psi_linear_coefficients(self.weights, self.model(i))
            if coef is not None and coef[0] <= 0:
                raise UnsupportedRuleError("psi must be strictly increasing in the bid")
            cache[i] = coef
        return cache[i]

    def linear_form(self, i=0):
        coef = self._coef(i)
        if coef is None:
            return None
        A, B = coef
        c = -B / A
        return A, c, c, -np.inf

    @property
    def is_linear(self) -> bool:
        m = self.models
        models = [m] if m is None or isinstance(m, (ValueDistribution, LinearVirtual)) else list(m)
        return all(psi_linear_coefficients(self.weights, x) is not None for x in models)

    def score_array(self, b, w, i=0):
        if self._coef(i) is not None:
            return super().score_array(b, w, i)
        p = psi_values(self.weights, self.model(i), b)
        return w * p, p >= 0

    def floor(self, w, i=0):
        if self._coef(i) is not None:
            return super().floor(w, i)
        key = ("floor", i)
        cache = self._coef_cache
        if key not in cache:
            cache[key] = psi_inverse_zero(self.weights, self.model(i)).price
        return cache[key]

    def inverse(self, s, w, i=0):
        if self._coef(i) is not None:
            return super().inverse(s, w, i)
        model = self.model(i)
        lo_b, hi_b = model.support
        s = np.asarray(s, float)
        lo = np.full(s.shape, lo_b)
        hi = np.full(s.shape, hi_b)
        while np.max(hi - lo, initial=0.0) > _INV_TOL:
            mid = 0.5 * (lo + hi)
            below = w * psi_values(self.weights, model, mid) < s
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def params(self) -> dict:
        return {"alpha": self.weights.alpha, "beta": self.weights.beta,
                "gamma": self.weights.gamma}


def score(rule: RankingRule, b: float, w: float, i: int = 0) -> tuple[float, bool]:
    return rule.score(b, w, i)


# ---------------------------------------------------------------------------
# outcomes
# ---------------------------------------------------------------------------

@dataclass
class AuctionOutcome:
    assignment: dict[int, int]          # slot index -> bidder index
    scores: np.ndarray
    eligible: np.ndarray
    effects: np.ndarray                 # slot effect received by each bidder
    ranking: list[int]                  # eligible bidders, best first
    prices: np.ndarray | None = None
    bidders: list[BidderProfile] | None = None

    @property
    def slot_of(self) -> dict[int, int]:
        return {b: k for k, b in self.assignment.items()}

    @property
    def metrics(self):
        from .objectives import outcome_metrics
        return outcome_metrics(self, self.bidders)


def _scores(rule, bids, ws):
    n = len(bids)
    sc = np.empty(n)
    el = np.empty(n, bool)
    for i in range(n):
        s, e = rule.score_array(np.asarray([bids[i]], float), ws[i], i)
        sc[i], el[i] = s[0], e[0]
    return sc, el


def _rank(scores: np.ndarray, eligible: np.ndarray) -> list[int]:
    idx = [i for i in range(len(scores)) if eligible[i]]
    # stable sort keeps lower indices first on ties
    return sorted(idx, key=lambda i: -scores[i])


def allocate(rule: RankingRule, bidders, slots, bids=None) -> AuctionOutcome:
    bidders = as_bidders(bidders)
    if not bidders:
        raise ValueError("at least one bidder is required")
    slots = as_slots(slots)
    bids = [p.b for p in bidders] if bids is None else list(bids)
    ws = [p.w for p in bidders]
    sc, el = _scores(rule, bids, ws)
    ranking = _rank(sc, el)
    effects = np.zeros(len(bidders))
    assignment = {}
    for k, i in enumerate(ranking[: len(slots)]):
        assignment[k] = i
        effects[i] = slots.effects[k]
    return AuctionOutcome(assignment, sc, el, effects, ranking, None, bidders)


def truthful_payments(rule: RankingRule, bidders, slots, bids=None) -> np.ndarray:
    """Myerson per-click prices for the allocation at the submitted bids.

    The bidder in slot ``k`` pays ``(1/s_k) * sum_{m>=k} (s_m - s_{m+1}) tau_m``
    where ``tau_m`` is the least bid winning slot ``m`` or better.
    """
    bidders = as_bidders(bidders)
    slots = as_slots(slots)
    out = allocate(rule, bidders, slots, bids)
    s = list(slots.effects) + [0.0]
    K = len(slots)
    prices = np.zeros(len(bidders))
    for k, i in out.assignment.items():
        w = bidders[i].w
        fl = rule.floor(w, i)
        total = 0.0
        for m in range(k, K):
            j = m + 1  # competitor holding slot m once i is removed
            if j < len(out.ranking):
                tau = max(float(rule.inverse(out.scores[out.ranking[j]], w, i)), fl)
            else:
                tau = fl
            total += (s[m] - s[m + 1]) * tau
        prices[i] = total / s[k]
    return prices


def gsp_payments(rule: RankingRule, bidders, slots, bids=None) -> np.ndarray:
    """GSP per-click prices: the least bid that keeps each winner's slot."""
    bidders = as_bidders(bidders)
    slots = as_slots(slots)
    out = allocate(rule, bidders, slots, bids)
    prices = np.zeros(len(bidders))
    for k, i in out.assignment.items():
        w = bidders[i].w
        fl = rule.floor(w, i)
        if k + 1 < len(out.ranking):
            prices[i] = max(float(rule.inverse(out.scores[out.ranking[k + 1]], w, i)), fl)
        else:
            prices[i] = fl
    return prices


def priced_outcome(rule, bidders, slots, pricing: str = "gsp", bids=None) -> AuctionOutcome:
    out = allocate(rule, bidders, slots, bids)
    fn = gsp_payments if pricing == "gsp" else truthful_payments
    out.prices = fn(rule, bidders, slots, bids)
    return out


def _require_linear(rule: RankingRule, n: int) -> None:
    if not rule.is_linear or any(rule.linear_form(i) is None for i in range(n)):
        raise UnsupportedRuleError(
            "equilibrium construction needs a rule linear in bids; "
            "rank by a linear_fit_virtual approximation instead")


def lowest_sne_bids(rule: RankingRule, types, slots, strict: bool = True) -> np.ndarray:
    """Bids of the GSP equilibrium that reproduces the truthful outcome.

    Unallocated bidders bid their value; each allocated bidder below the top
    bids exactly what makes the bidder above pay its truthful price.  When that
    bid would fall under the bidder's own eligibility floor the truthful
    outcome is out of reach: ``strict`` raises, otherwise the bid is lifted to
    the floor and the bidders below aim at the lifted bid instead.
    """
    bidders = as_bidders(types)
    slots = as_slots(slots)
    _require_linear(rule, len(bidders))
    out = allocate(rule, bidders, slots)
    prices = truthful_payments(rule, bidders, slots)
    bids = np.array([p.t for p in bidders], float)
    order = [out.assignment[k] for k in sorted(out.assignment)]
    for above, below in zip(order, order[1:]):
        target, _ = rule.score(min(prices[above], bids[above]), bidders[above].w, above)
        b = float(rule.inverse(target, bidders[below].w, below))
        fl = rule.floor(bidders[below].w, below)
        if b < fl - 1e-12:
            if strict:
                raise NotImplementableError(
                    f"bidder {below} would have to bid {b:.6g} below its floor {fl:.6g}")
            b = fl
        bids[below] = max(b, fl)
    return bids


class SneVerdict(NamedTuple):
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _deviation_utilities(rule, bidders, bids, slots, i, grid):
    """Per-click utility ``x(t - p)`` of bidder ``i`` at each deviation bid."""
    n = len(bidders)
    others = [j for j in range(n) if j != i]
    sc, el = _scores(rule, bids, [p.w for p in bidders])
    comp = sorted((j for j in others if el[j]), key=lambda j: (-sc[j], j))
    comp_sc = np.array([sc[j] for j in comp])
    comp_idx = np.array(comp, int)
    w = bidders[i].w
    s_dev, e_dev = rule.score_array(grid, w, i)
    if comp:
        ahead = (comp_sc[None, :] > s_dev[:, None]) | (
            (comp_sc[None, :] == s_dev[:, None]) & (comp_idx[None, :] < i))
        rank = ahead.sum(axis=1)
    else:
        rank = np.zeros(grid.size, int)
    K = len(slots)
    eff = np.asarray(slots.effects)
    shown = e_dev & (rank < K)
    x = np.where(shown, eff[np.minimum(rank, K - 1)], 0.0)
    fl = rule.floor(w, i)
    if comp:
        has_next = rank < len(comp)
        thr = rule.inverse(comp_sc[np.minimum(rank, len(comp) - 1)], w, i)
        p = np.where(has_next, np.maximum(thr, fl), fl)
    else:
        p = np.full(grid.size, fl)
    return np.where(shown, x * (bidders[i].t - p), 0.0)


def verify_sne(rule: RankingRule, types, bids, slots, deviation_grid: int = 1000,
               conservative: bool = True, tol: float = 1e-9) -> SneVerdict:
    """Check envy-freeness exactly and Nash deviations on a bid grid.

    Envy compares slot ``j``'s price mapped into bidder ``i``'s bid space through
    the rank score, which is ``w_j p_j / w_i`` for the standard rule.
    """
    bidders = as_bidders(types)
    slots = as_slots(slots)
    bids = np.asarray(bids, float)
    if conservative and np.any(bids > np.array([p.t for p in bidders]) + 1e-12):
        return SneVerdict(False, "a bid exceeds its value under the conservative assumption")
    out = allocate(rule, bidders, slots, bids)
    prices = gsp_payments(rule, bidders, slots, bids)
    x = out.effects
    n = len(bidders)
    util = np.array([x[i] * (bidders[i].t - prices[i]) for i in range(n)])
    for i in range(n):
        ti, wi = bidders[i].t, bidders[i].w
        for j in range(n):
            if i == j or x[j] == 0:
                continue
            sj, _ = rule.score(prices[j], bidders[j].w, j)
            pij = float(rule.inverse(sj, wi, i))
            lhs = x[j] * (ti - pij)
            if lhs > util[i] + tol * max(1.0, abs(util[i])):
                return SneVerdict(False, f"bidder {i} envies bidder {j}: {lhs:.6g} > {util[i]:.6g}")
    for i in range(n):
        top = bidders[i].t if conservative else max(bidders[i].t, bids[i]) * 1.5
        grid = np.linspace(0.0, top, deviation_grid)
        dev = _deviation_utilities(rule, bidders, bids, slots, i, grid)
        k = int(np.argmax(dev))
        if dev[k] > util[i] + tol * max(1.0, abs(util[i])):
            return SneVerdict(False, f"bidder {i} gains by bidding {grid[k]:.6g}: "
                                     f"{dev[k]:.6g} > {util[i]:.6g}")
    return SneVerdict(True, "ok")
