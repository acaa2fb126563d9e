"""Objective maximisation under a cap on expected impressions.

Each search term ``j`` has one slot with effect ``s_j`` and appears with
probability ``q_j``.  The Lagrangian of the cap

    sum_j q_j E[ s_j w psi(t) x ] - lam * (sum_j q_j E[x] - theta)

is maximised term by term: the bidder with the highest ``w psi`` wins and is
shown iff ``w psi >= lam / s_j``, a per-impression score reserve.  ``lam`` is
chosen so the cap binds, or zero when it does not.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import DegenerateInputError, DomainError
from ..objectives import BidderModel, EstimatorConfig, Scenario, sample_types
from ..valuations import ObjectiveWeights, psi_values
from .discrete import DiscreteBidder, DiscreteInstance

TermBidder = Union[DiscreteBidder, BidderModel]


@dataclass(frozen=True)
class AdCapTerm:
    q: float
    s: float
    bidders: tuple[TermBidder, ...]
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        if not 0.0 <= self.q <= 1.0:
            raise DomainError(f"term probability {self.q} outside [0, 1]")
        if not self.s > 0:
            raise DomainError("slot effect must be positive")
        if not self.bidders:
            raise DomainError("a term needs at least one bidder")

    @property
    def is_discrete(self) -> bool:
        return all(isinstance(b, DiscreteBidder) for b in self.bidders)


@dataclass(frozen=True)
class AdCapProblem:
    terms: tuple[AdCapTerm, ...]
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise DomainError("at least one term is required")
        total = sum(t.q for t in self.terms)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"term probabilities sum to {total}, not 1")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"cap {self.theta} outside [0, 1]")

    @property
    def is_discrete(self) -> bool:
        return all(t.is_discrete for t in self.terms)


@dataclass(frozen=True)
class AdCapSolution:
    lam: float
    reserves: tuple[float, ...]
    impressions: float
    objective: float
    cap: float
    tie_prob: float = 1.0
    exact: bool = True
    diagnostic: str = ""

    @property
    def slackness(self) -> float:
        """Complementary slackness residual ``lam * (cap - achieved)``."""
        return self.lam * (self.cap - self.impressions)


# -- atoms: (term, winner score s_j * w * psi, probability) ------------------
def _term_atoms(term: AdCapTerm) -> tuple[np.ndarray, np.ndarray]:
    """Winner value ``s_j * max_i w psi`` and probability of each type profile."""
    inst = DiscreteInstance(term.bidders, [1.0])
    psi = inst.gather([b.psi(term.weights) for b in term.bidders])
    return term.s * (inst.w * psi).max(axis=1), inst.profile_prob


def _term_draws(term: AdCapTerm, n: int, rng) -> np.ndarray:
    sc = Scenario(term.bidders, [1.0])
    t, w = sample_types(sc, n, rng)
    psi = np.stack([psi_values(term.weights, m.value, t[:, i])
                    for i, m in enumerate(sc.expanded())], axis=1)
    return term.s * (w * psi).max(axis=1)


def term_values(p: AdCapProblem, est: EstimatorConfig | None = None):
    """Per-term ``(values, probabilities)``: exact atoms or equally weighted draws."""
    out = []
    for j, term in enumerate(p.terms):
        if term.is_discrete:
            out.append(_term_atoms(term))
        else:
            est = est or EstimatorConfig()
            v = np.concatenate([
                _term_draws(term, est.batch_size(b), np.random.default_rng(
                    np.random.SeedSequence(int(est.seed), spawn_key=(b, j))))
                for b in range(est.n_batches)])
            out.append((v, np.full(v.size, 1.0 / v.size)))
    return out


def _impressions(p, vals, lam: float, tie_prob: float = 1.0) -> float:
    total = 0.0
    for term, (v, pr) in zip(p.terms, vals):
        total += term.q * (pr[v > lam].sum() + tie_prob * pr[v == lam].sum())
    return float(total)


def _objective(p, vals, lam: float, tie_prob: float = 1.0) -> float:
    total = 0.0
    for term, (v, pr) in zip(p.terms, vals):
        total += term.q * (np.dot(pr[v > lam], v[v > lam]) + tie_prob * np.dot(pr[v == lam], v[v == lam]))
    return float(total)


def expected_impressions(p: AdCapProblem, lam: float, est: EstimatorConfig | None = None) -> float:
    """Probability-weighted chance that a term shows its winner at multiplier ``lam``."""
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    return _impressions(p, term_values(p, est), lam)


def solve_ad_cap(p: AdCapProblem, tol: float = 1e-9, est: EstimatorConfig | None = None) -> AdCapSolution:
    """Multiplier, per-term score reserves and achieved impressions of the capped optimum.

    Discrete problems are solved exactly: atoms are admitted in decreasing
    order of value and the marginal atom is shown with probability
    ``tie_prob`` so the cap binds exactly.  Continuous problems bisect on the
    sample estimate of expected impressions.
    """
    if p.theta <= 0:
        raise DegenerateInputError("a zero impression cap shows no ads; nothing to optimise")
    if tol <= 0:
        raise DomainError("tol must be positive")
    vals = term_values(p, est)
    e0 = _impressions(p, vals, 0.0)

    def result(lam, tie, exact, diag=""):
        return AdCapSolution(lam, tuple(lam / t.s for t in p.terms), _impressions(p, vals, lam, tie),
                             _objective(p, vals, lam, tie), p.theta, tie, exact, diag)

    # summing probabilities can overshoot 1 by an ulp or two
    if p.theta >= e0 - 1e-12:
        return result(0.0, 1.0, p.is_discrete)

    if p.is_discrete:
        atoms = sorted({float(x) for v, _ in vals for x in v if x > 0}, reverse=True)
        for lam in atoms:
            strict = _impressions(p, vals, lam, 0.0)
            full = _impressions(p, vals, lam, 1.0)
            if full >= p.theta:
                tie = (p.theta - strict) / (full - strict)
                return result(lam, float(tie), True)
        raise AssertionError("unreachable: E(0) exceeds theta")

    hi = max(float(v.max()) for v, _ in vals)
    lo = 0.0
    while hi - lo > 1e-14 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        e = _impressions(p, vals, mid)
        if abs(e - p.theta) <= tol:
            return result(mid, 1.0, False)
        if e > p.theta:
            lo = mid
        else:
            hi = mid
    e = _impressions(p, vals, hi)
    diag = "" if abs(e - p.theta) <= tol else (
        f"expected impressions jump past the cap; closest {e:.6g} vs cap {p.theta:.6g}")
    return result(hi, 1.0, False, diag)


def enumerate_threshold_policies(p: AdCapProblem) -> tuple[float, float]:
    """Best objective over threshold policies meeting the cap, by brute force.

    A policy fixes a threshold per term and shows the winner iff its value
    clears it.  Because a single expected-value constraint may be met with
    equality only by randomising, pairs of policies mixed to hit the cap are
    enumerated too.  Returns ``(objective, impressions)`` of the best policy.
    """
    if not p.is_discrete:
        raise DomainError("policy enumeration needs discrete types")
    per_term = []
    for term, (v, pr) in zip(p.terms, (_term_atoms(t) for t in p.terms)):
        order = np.argsort(-v, kind="stable")
        v, pr = v[order], pr[order]
        cuts = np.concatenate([[0], np.nonzero(np.diff(v))[0] + 1, [v.size]])
        # showing the top groups of equal value: cumulative impressions and objective
        imp = np.concatenate([[0.0], np.cumsum(pr)[cuts[1:] - 1]])
        obj = np.concatenate([[0.0], np.cumsum(pr * v)[cuts[1:] - 1]])
        per_term.append((term.q * imp, term.q * obj))
    combos = list(itertools.product(*[range(len(imp)) for imp, _ in per_term]))
    imps = np.array([sum(per_term[j][0][c[j]] for j in range(len(c))) for c in combos])
    objs = np.array([sum(per_term[j][1][c[j]] for j in range(len(c))) for c in combos])
    theta = p.theta
    under = imps <= theta + 1e-15
    best = (float(objs[under].max()), float(imps[under][objs[under].argmax()]))
    over = ~under
    if over.any():
        iu, ou = imps[under], objs[under]
        for io, oo in zip(imps[over], objs[over]):
            mix = (theta - iu) / (io - iu)
            val = (1 - mix) * ou + mix * oo
            k = int(val.argmax())
            if val[k] > best[0]:
                best = (float(val[k]), theta)
    return best
