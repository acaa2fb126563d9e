"""Instances on which GSP-style pricing over templates misbehaves.

Each builder returns a :class:`Counterexample` holding the auction, the
profile it was judged on and a machine-checkable verdict.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import DomainError
from ..position_auction import BidderProfile, lowest_sne_bids
from .core import CONSIDERATE, INDIFFERENT, WELFARE, ClassedBidder, TemplateAuction, TemplateSet
from .sne import SECOND_HIGHEST, SELECTIONS, STANDARD, sne_grid_search, verify_template_sne

TEXT, IMAGE = 0, 1
CLASS_A, CLASS_B = 0, 1
NAMES = ("non-implementation", "tc-nonexistence", "tc-unoptimal", "ti-nonexistence")


@dataclass
class Counterexample:
    name: str
    params: dict
    auction: TemplateAuction
    claim: str
    reproduced: bool
    verdict: str
    bids: np.ndarray | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def scenario_dict(self) -> dict:
        """The instance in the harness scenario layout."""
        auc = self.auction
        return {
            "name": self.name,
            "objective": {"alpha": auc.weights.alpha, "beta": auc.weights.beta,
                          "gamma": auc.weights.gamma},
            "classes": [{"class": int(b.cls), "value": float(b.t), "weight": float(b.w)}
                        for b in auc.bidders],
            "templates": [{str(c): list(map(float, e)) for c, e in tpl.items()}
                          for tpl in auc.templates.templates],
        }

    def report(self) -> str:
        lines = [f"{self.name} {self.params}", f"claim: {self.claim}", f"verdict: {self.verdict}"]
        lines += [f"  {k}: {v}" for k, v in self.details.items()]
        return "\n".join(lines)


def _check_eps(eps: float, bound: float, what: str) -> None:
    if not 0.0 < eps <= bound:
        raise DomainError(f"eps must lie in (0, {bound:.3g}] for the {what} instance, got {eps}")


def _welfare(auc: TemplateAuction, eff: np.ndarray) -> float:
    return float(np.dot(auc.t * auc.w, eff))


# -- template-considerate pricing does not implement the truthful outcome ---------------
def non_implementation(eps: float = 1e-3, deviation_grid: int = 1000) -> Counterexample:
    """Text values 100/50/25/10, image values 120/110; zero text bids are an SNE."""
    _check_eps(eps, 1e-3 * 10.0, "non-implementation")
    bidders = [ClassedBidder(TEXT, v) for v in (100, 50, 25, 10)]
    bidders += [ClassedBidder(IMAGE, v) for v in (120, 110)]
    T = TemplateSet(({TEXT: (1.0, 1 - eps, 1 - 2 * eps)}, {IMAGE: (1.0,)}))
    auc = TemplateAuction(bidders, T)
    bids = np.array([0, 0, 0, 0, 120, 110], float)
    truthful = auc.outcome(auc.t)
    played = auc.outcome(bids, pricing=CONSIDERATE)
    verdict = verify_template_sne(auc, bids, CONSIDERATE, deviation_grid=deviation_grid)
    ok = bool(verdict) and played.template != truthful.template
    return Counterexample(
        "non-implementation", {"eps": eps}, auc,
        "an SNE selects a different template than the truthful auction", ok,
        "reproduced" if ok else f"not reproduced ({verdict.message})", bids,
        {"truthful_template": truthful.template, "sne_template": played.template,
         "truthful_objective": truthful.objective, "sne_objective": played.objective,
         "sne_check": verdict.message, "deviation_grid": deviation_grid})


# -- template-considerate pricing: no SNE for conservative bidders -------------------
def tc_nonexistence(eps: float = 1e-3, grid: int = 15, workers: int = 1) -> Counterexample:
    """Two symmetric classes of four bidders (350/300/200/100) and two mirrored templates."""
    _check_eps(eps, 1e-3 * 50.0, "tc-nonexistence")
    big = (1.0, 1 - eps, 1 - 2 * eps)
    small = (eps, eps ** 2, eps ** 3)
    T = TemplateSet(({CLASS_A: big, CLASS_B: small}, {CLASS_B: big, CLASS_A: small}))
    bidders = [ClassedBidder(c, v) for c in (CLASS_A, CLASS_B) for v in (350, 300, 200, 100)]
    auc = TemplateAuction(bidders, T)
    res = sne_grid_search(auc, CONSIDERATE, STANDARD, grid=grid, workers=workers)
    n_res = max(res.resolution)
    return Counterexample(
        "tc-nonexistence", {"eps": eps, "grid": grid}, auc,
        "no SNE exists for conservative bidders under template-considerate pricing",
        not res.found,
        f"no SNE at resolution {n_res}" if not res.found else f"not reproduced: SNE {res.bids.tolist()}",
        res.bids, {"resolution": res.resolution, "profiles_checked": res.candidates})


# -- template-considerate pricing: SNE with vanishing welfare share -------------------
def tc_unoptimal_auction(m: int, eps: float) -> TemplateAuction:
    n = 2 * m + m * m
    x = 2.0 * (2 * m - 1) / (2 * m + m * m)
    values = [m / 2 - k * eps for k in range(1, 2 * m + 1)] + [1 - k * eps for k in range(1, m * m + 1)]
    first = [1 - k * eps for k in range(1, 2 * m + 1)] + [eps ** k for k in range(1, m * m)]
    second = [x - k * eps for k in range(1, n)]
    T = TemplateSet(({0: tuple(first)}, {0: tuple(second)}))
    return TemplateAuction([ClassedBidder(0, v) for v in values], T)


def tc_unoptimal(m: int = 10, eps: float = 1e-6, deviation_grid: int = 64) -> Counterexample:
    """``2m`` high bidders and ``m^2`` low bidders; the flat template is an SNE.

    The profile is the lowest equilibrium of the flat template played alone.
    Its welfare is compared with that of the truthful allocation.
    """
    if m < 4:
        raise DomainError("m must be at least 4")
    _check_eps(eps, 1e-3 / m ** 2, f"tc-unoptimal(m={m})")
    auc = tc_unoptimal_auction(m, eps)
    flat = np.asarray(auc.templates.effects(1, 0))
    types = [BidderProfile(t) for t in auc.t]
    bids = lowest_sne_bids(auc.rules[0], types, flat, strict=False)
    played = auc.outcome(bids)
    truthful = auc.outcome(auc.t)
    verdict = verify_template_sne(auc, bids, CONSIDERATE, deviation_grid=deviation_grid)
    ratio = _welfare(auc, played.effects) / _welfare(auc, truthful.effects)
    x = 2.0 * (2 * m - 1) / (2 * m + m * m)
    ok = bool(verdict) and played.template == 1 and truthful.template == 0 and ratio < 1
    return Counterexample(
        "tc-unoptimal", {"m": m, "eps": eps}, auc,
        "an SNE on the flat template has welfare far below the truthful outcome", ok,
        f"reproduced (ratio {ratio:.6g})" if ok else f"not reproduced ({verdict.message})", bids,
        {"ratio": ratio, "approximate_ratio": (2 * m * (m / 2) + m * m) * x / (2 * m * (m / 2)),
         "sne_template": played.template, "truthful_template": truthful.template,
         "sne_check": verdict.message, "deviation_grid": deviation_grid})


# -- template-indifferent pricing: no SNE under objective-maximising selection ----------
def ti_nonexistence_auction(delta: float, eps: float) -> TemplateAuction:
    bidders = [ClassedBidder(CLASS_A, v) for v in (100, 100 - eps, 100 - 2 * eps, 20)]
    bidders += [ClassedBidder(CLASS_B, v) for v in (150, 135)]
    T = TemplateSet(({CLASS_A: (1.0, 0.5, 0.25), CLASS_B: (delta,)},
                     {CLASS_A: (delta, delta / 2, delta / 4), CLASS_B: (1.0,)}))
    return TemplateAuction(bidders, T)


def ti_nonexistence(delta: float = 0.1, eps: float = 1e-4, grid: int = 25,
                    selection: str = STANDARD, workers: int = 1) -> Counterexample:
    """Class A values 100, 100-eps, 100-2eps, 20; class B values 150, 135.

    Two checks: an anchored grid search under the requested selection rule,
    and the deviation of A's third bidder to 70 from the boundary profile
    ``b3 = 60 - eps``, ``b1 = b2 = 80 - eps`` (template gap and own gain).
    """
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    _check_eps(eps, 1e-3 * 80.0, "ti-nonexistence")
    if selection not in SELECTIONS:
        raise DomainError(f"unknown allocation rule {selection!r}")
    auc = ti_nonexistence_auction(delta, eps)
    anchors = {0: [80 - eps], 1: [80 - eps], 2: [60 - eps, 70.0]}
    res = sne_grid_search(auc, INDIFFERENT, selection, grid=grid, anchors=anchors, workers=workers)

    # the deviation argument compares templates with the top bid counted as the second
    b2, b3 = 80 - eps, 60 - eps
    base = np.array([b2, b2, b3, 20.0, 150.0, 135.0])
    dev = base.copy()
    dev[2] = 70.0
    V = auc.template_values(auc.scores(dev), cap_top=True)[0]
    gap = float(V[0] - V[1])
    before = auc.outcome(base, cap_top=True, pricing=INDIFFERENT)
    after = auc.outcome(dev, cap_top=True, pricing=INDIFFERENT)
    gain = (after.effects[2] * (auc.t[2] - after.prices[2])
            - before.effects[2] * (auc.t[2] - before.prices[2]))
    expected = (1 - delta) * (2.5 - 1.5 * eps)
    profitable = gap > 0 and gain > 0
    ok = not res.found and profitable
    if ok:
        verdict = f"no SNE at resolution {max(res.resolution)}"
    elif res.found:
        verdict = f"not reproduced: grid SNE {res.bids.tolist()} with template {res.template}"
    else:
        verdict = "not reproduced: the deviation to 70 is not profitable"
    return Counterexample(
        "ti-nonexistence", {"delta": delta, "eps": eps, "grid": grid, "selection": selection}, auc,
        "no SNE exists for conservative bidders under template-indifferent pricing", ok, verdict,
        res.bids, {"resolution": res.resolution, "profiles_checked": res.candidates,
                   "deviation_gap": gap, "expected_gap": expected, "deviation_gain": float(gain),
                   "selection": selection})


def counterexample(name: str, **params) -> Counterexample:
    """Build and check the named instance (see :data:`NAMES`)."""
    builders = {"non-implementation": non_implementation, "tc-nonexistence": tc_nonexistence,
                "tc-unoptimal": tc_unoptimal, "ti-nonexistence": ti_nonexistence}
    if name not in builders:
        raise DomainError(f"unknown counterexample {name!r}; choose from {', '.join(NAMES)}")
    return builders[name](**params)
