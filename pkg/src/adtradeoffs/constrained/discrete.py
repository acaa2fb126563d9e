"""Finite type spaces evaluated exactly by enumerating every type profile.

For a bidder with types ``v_1 < ... < v_L`` and masses ``q_l`` the discrete
virtual value is

    phi(v_l) = v_l - (v_{l+1} - v_l) * (1 - F(v_l)) / q_l,     phi(v_L) = v_L

and for any allocation whose interim clicks ``x(v_l)`` are non-decreasing in
the type, truthful (threshold) payments collect exactly ``sum_l q_l phi(v_l) x(v_l)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import DomainError
from ..objectives import MetricsRecord
from ..position_auction import RankingRule, SlotLayout, as_slots


@dataclass(frozen=True, eq=False)
class DiscreteBidder:
    values: tuple[float, ...]
    probs: tuple[float, ...]
    w: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, float)
        q = np.asarray(self.probs, float)
        if v.ndim != 1 or v.size == 0 or v.shape != q.shape:
            raise DomainError("values and probs must be non-empty and of equal length")
        if np.any(np.diff(v) <= 0):
            raise DomainError("type values must be strictly increasing")
        if np.any(q <= 0) or abs(q.sum() - 1.0) > 1e-9:
            raise DomainError("type probabilities must be positive and sum to one")
        if not self.w > 0:
            raise DomainError("ad effect must be positive")
        object.__setattr__(self, "values", tuple(v.tolist()))
        object.__setattr__(self, "probs", tuple((q / q.sum()).tolist()))

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.values)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.probs)

    @cached_property
    def phi(self) -> np.ndarray:
        v, q = self.v, self.q
        survival = 1.0 - np.cumsum(q)
        gaps = np.append(np.diff(v), 0.0)
        return v - gaps * survival / q

    def psi(self, weights) -> np.ndarray:
        a, b, g = _triple(weights)
        return a * self.phi + b * self.v + g

    @property
    def is_regular(self) -> bool:
        return bool(np.all(np.diff(self.phi) >= -1e-12))


def _triple(weights) -> tuple[float, float, float]:
    if hasattr(weights, "as_tuple"):
        return weights.as_tuple()
    a, b, g = weights
    return float(a), float(b), float(g)


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """Independent discrete bidders with fixed ad effects facing a slot layout."""

    bidders: tuple[DiscreteBidder, ...]
    slots: SlotLayout

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        object.__setattr__(self, "slots", as_slots(self.slots))
        if not self.bidders:
            raise DomainError("at least one bidder is required")

    @property
    def n(self) -> int:
        return len(self.bidders)

    @cached_property
    def profiles(self) -> np.ndarray:
        """Type indices of every profile, shape ``(P, n)``."""
        ranges = [range(len(b.values)) for b in self.bidders]
        return np.array(list(itertools.product(*ranges)), dtype=int).reshape(-1, self.n)

    @cached_property
    def profile_prob(self) -> np.ndarray:
        p = np.ones(len(self.profiles))
        for i, b in enumerate(self.bidders):
            p *= b.q[self.profiles[:, i]]
        return p

    def gather(self, per_type: Sequence[np.ndarray]) -> np.ndarray:
        """``(P, n)`` array with bidder ``i``'s per-type quantity at each profile."""
        return np.stack([np.asarray(per_type[i])[self.profiles[:, i]] for i in range(self.n)],
                        axis=1)

    @property
    def w(self) -> np.ndarray:
        return np.array([b.w for b in self.bidders])

    @property
    def is_regular(self) -> bool:
        return all(b.is_regular for b in self.bidders)

    # -- allocations ---------------------------------------------------------
    def rank_allocation(self, scores: np.ndarray, eligible: np.ndarray) -> np.ndarray:
        """Slot assignment ``y[P, n, K]`` ranking eligible bidders by score.

        Ties go to the lower bidder index.
        """
        P, n = scores.shape
        K = len(self.slots)
        key = np.where(eligible, -scores, np.inf)
        order = np.argsort(key, axis=1, kind="stable")
        n_el = eligible.sum(axis=1)
        y = np.zeros((P, n, K))
        rows = np.arange(P)
        for k in range(min(K, n)):
            show = k < n_el
            y[rows[show], order[show, k], k] = 1.0
        return y

    def psi_allocation(self, weights) -> np.ndarray:
        """Pointwise maximiser of ``sum w psi`` : rank by ``w psi``, show iff ``psi >= 0``."""
        psi = self.gather([b.psi(weights) for b in self.bidders])
        return self.rank_allocation(self.w * psi, psi >= 0)

    def rule_allocation(self, rule: RankingRule) -> np.ndarray:
        """Allocation of a ranking rule when every bidder bids its type."""
        t = self.gather([b.v for b in self.bidders])
        scores = np.empty_like(t)
        elig = np.empty(t.shape, bool)
        for i, b in enumerate(self.bidders):
            scores[:, i], elig[:, i] = rule.score_array(t[:, i], b.w, i)
        return self.rank_allocation(scores, elig)

    # -- evaluation ----------------------------------------------------------
    def interim_clicks(self, y: np.ndarray) -> list[np.ndarray]:
        """Expected clicks of each bidder at each of its types."""
        clicks = (y * self.slots.array[None, None, :]).sum(axis=2) * self.w[None, :]
        out = []
        for i, b in enumerate(self.bidders):
            mass = np.bincount(self.profiles[:, i], weights=self.profile_prob * clicks[:, i],
                               minlength=len(b.values))
            out.append(mass / b.q)
        return out

    def is_monotone(self, y: np.ndarray, tol: float = 1e-12) -> bool:
        return all(np.all(np.diff(x) >= -tol) for x in self.interim_clicks(y))

    def metrics(self, y: np.ndarray) -> MetricsRecord:
        """Exact metrics of a monotone allocation under threshold payments."""
        if not self.is_monotone(y):
            raise DomainError("allocation is not monotone; truthful payments do not exist")
        x = self.interim_clicks(y)
        rev = sum(float(np.dot(b.q * b.phi, xi)) for b, xi in zip(self.bidders, x))
        wel = sum(float(np.dot(b.q * b.v, xi)) for b, xi in zip(self.bidders, x))
        clk = sum(float(np.dot(b.q, xi)) for b, xi in zip(self.bidders, x))
        imp = float(np.dot(self.profile_prob, y.sum(axis=(1, 2))))
        return MetricsRecord(rev, wel, clk, imp)

    def rule_metrics(self, rule: RankingRule) -> MetricsRecord:
        return self.metrics(self.rule_allocation(rule))


def random_regular_instance(rng: np.random.Generator, n_bidders: int, n_types: int,
                            slots, max_tries: int = 1000, vary_w: bool = True) -> DiscreteInstance:
    """Draw a regular instance: types on [0, 1], Dirichlet masses, resampled until regular."""
    bidders = []
    for _ in range(n_bidders):
        for _ in range(max_tries):
            v = np.sort(rng.uniform(0.0, 1.0, n_types))
            if np.any(np.diff(v) < 1e-3):
                continue
            q = rng.dirichlet(np.full(n_types, 2.0))
            b = DiscreteBidder(tuple(v), tuple(q), float(rng.uniform(0.2, 1.0)) if vary_w else 1.0)
            if b.is_regular:
                bidders.append(b)
                break
        else:
            raise DomainError("could not draw a regular bidder")
    return DiscreteInstance(tuple(bidders), slots)
