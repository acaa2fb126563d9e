"""Multi-class auctions over mutually exclusive page templates.

A template gives each ad class a non-increasing vector of slot effects.  Within
a template every class ranks its bidders by the rank score ``w * psi(b)`` and
fills its slots in that order (only scores with ``psi >= 0`` are seated); the
template with the largest total score-weighted effect is shown, ties going to
the lowest index.

All batch routines take a matrix of rank scores with one row per bid profile
and work in score space.  Prices are mapped back to bids at the end through
each class's inverse score function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import DomainError, InternalError
from ..position_auction import OptimalPsi
from ..valuations import ObjectiveWeights, ValueModel, psi_values

WELFARE = ObjectiveWeights(0.0, 1.0, 0.0)
CONSIDERATE = "considerate"
INDIFFERENT = "indifferent"
PRICINGS = (CONSIDERATE, INDIFFERENT)
_REL_TOL = 1e-12


@dataclass(frozen=True)
class ClassedBidder:
    cls: int
    t: float
    w: float = 1.0
    b: float | None = None

    def __post_init__(self):
        if self.t < 0:
            raise DomainError("values must be non-negative")
        if not self.w > 0:
            raise DomainError("ad effects must be positive")
        if self.b is None:
            object.__setattr__(self, "b", float(self.t))
        elif self.b < 0:
            raise DomainError("bids must be non-negative")


def as_classed(bidders) -> list[ClassedBidder]:
    out = []
    for b in bidders:
        out.append(b if isinstance(b, ClassedBidder) else ClassedBidder(*b))
    return out


@dataclass(frozen=True)
class TemplateSet:
    """``templates[j][c]`` is the slot-effect vector template ``j`` gives class ``c``."""

    templates: tuple[Mapping[int, tuple[float, ...]], ...]

    def __post_init__(self):
        clean = []
        for j, tpl in enumerate(self.templates):
            row = {}
            for c, eff in dict(tpl).items():
                e = tuple(float(x) for x in eff)
                if any(x < 0 for x in e):
                    raise DomainError(f"template {j} class {c}: negative slot effect")
                if any(b > a for a, b in zip(e, e[1:])):
                    raise DomainError(f"template {j} class {c}: slot effects must be non-increasing")
                row[int(c)] = e
            clean.append(row)
        if not clean:
            raise DomainError("at least one template is required")
        object.__setattr__(self, "templates", tuple(clean))

    def __len__(self) -> int:
        return len(self.templates)

    def effects(self, j: int, c: int) -> tuple[float, ...]:
        return self.templates[j].get(c, ())

    @property
    def classes(self) -> list[int]:
        return sorted({c for t in self.templates for c in t})


def is_class_selection(templates: TemplateSet, tol: float = 1e-9) -> bool:
    """True iff each class's non-zero effects differ only by a constant ratio across templates."""
    for c in templates.classes:
        vecs = [np.asarray(templates.effects(j, c)) for j in range(len(templates))]
        vecs = [v for v in vecs if v.size and np.any(v > 0)]
        for a, b in zip(vecs, vecs[1:]):
            m = min(a.size, b.size)
            a, b = a[:m], b[:m]
            nz = (a > 0) & (b > 0)
            if np.any((a > 0) != (b > 0)):
                return False
            if nz.any():
                ratio = a[nz] / b[nz]
                if np.ptp(ratio) > tol * max(1.0, abs(ratio[0])):
                    return False
    return True


@dataclass
class TemplateOutcome:
    template: int
    assignment: dict[int, dict[int, int]]   # class -> {slot: bidder}
    effects: np.ndarray                      # slot effect received by each bidder
    objective: float
    prices: np.ndarray | None = None

    @property
    def shown(self) -> list[int]:
        return [i for slots in self.assignment.values() for i in slots.values()]


class TemplateAuction:
    """Bidders, templates and objective weights, with vectorised evaluation.

    ``models`` gives the value model used in ``psi`` for each class: one model
    for all classes, a mapping from class id, or ``None`` when ``alpha = 0``.
    """

    def __init__(self, bidders, templates: TemplateSet,
                 weights: ObjectiveWeights = WELFARE,
                 models: ValueModel | Mapping[int, ValueModel] | None = None):
        self.bidders = as_classed(bidders)
        if not self.bidders:
            raise DomainError("at least one bidder is required")
        self.templates = templates
        self.weights = weights
        self.n = len(self.bidders)
        self.t = np.array([b.t for b in self.bidders])
        self.w = np.array([b.w for b in self.bidders])
        self.cls = np.array([b.cls for b in self.bidders])
        self.class_ids = sorted(set(self.cls.tolist()))
        self.members = {c: np.nonzero(self.cls == c)[0] for c in self.class_ids}
        self.local = np.empty(self.n, int)
        for c, idx in self.members.items():
            self.local[idx] = np.arange(idx.size)
        J = len(templates)
        self.J = J
        # effect matrix per class, padded or cut to the class size
        self.E = {}
        self.L = {}
        for c, idx in self.members.items():
            m = idx.size
            E = np.zeros((J, m))
            L = np.zeros(J, int)
            for j in range(J):
                e = np.asarray(templates.effects(j, c))[:m]
                E[j, : e.size] = e
                L[j] = e.size
            self.E[c], self.L[c] = E, L
        if isinstance(models, Mapping):
            self.models = {c: models.get(c) for c in self.class_ids}
        else:
            self.models = {c: models for c in self.class_ids}
        self.rules = {c: OptimalPsi(weights, self.models[c]) for c in self.class_ids}

    # -- score maps ------------------------------------------------------------
    def scores(self, bids) -> np.ndarray:
        B = np.atleast_2d(np.asarray(bids, float))
        S = np.empty_like(B)
        for c, idx in self.members.items():
            S[:, idx] = self.w[idx] * psi_values(self.weights, self.models[c], B[:, idx])
        return S

    def bid_of_score(self, i: int, s) -> np.ndarray:
        """Bid of bidder ``i`` with rank score ``s`` (never below its floor)."""
        c = self.cls[i]
        rule = self.rules[c]
        s = np.asarray(s, float)
        return np.maximum(rule.inverse(s, self.w[i], 0), rule.floor(self.w[i], 0))

    def floor_bid(self, i: int) -> float:
        return float(self.rules[self.cls[i]].floor(self.w[i], 0))

    # -- batch evaluation --------------------------------------------------------
    def _sorted(self, S):
        """Per class: order (local indices), sorted scores and eligibility."""
        out = {}
        for c, idx in self.members.items():
            Sc = S[:, idx]
            el = Sc >= 0
            key = np.where(el, -Sc, np.inf)
            order = np.argsort(key, axis=1, kind="stable")
            out[c] = (order, np.take_along_axis(Sc, order, 1), np.take_along_axis(el, order, 1))
        return out

    def template_values(self, S, cap_top: bool = False, srt=None) -> np.ndarray:
        """Objective of every template at every score row, shape ``(M, J)``.

        With ``cap_top`` each class's best score counts as its second best.
        """
        V = np.zeros((S.shape[0], self.J))
        for c, idx in self.members.items():
            if srt is not None:
                _, SS, el = srt[c]
                vals = np.where(el, SS, 0.0)
            else:
                # ineligible scores sort last and count as zero
                vals = np.maximum(-np.sort(-S[:, idx], axis=1), 0.0)
            if cap_top:
                vals = vals.copy()
                vals[:, 0] = vals[:, 1] if vals.shape[1] > 1 else 0.0
            V += vals @ self.E[c].T
        return V

    @staticmethod
    def winners(V: np.ndarray) -> np.ndarray:
        return np.argmax(V, axis=1)

    def outcome_arrays(self, S, cap_top: bool = False):
        """``(winner, rank, effect, srt, V)`` where ``rank`` is the seat index in the
        winning template (-1 when unseated) and ``effect`` the slot effect received."""
        srt = self._sorted(S)
        V = self.template_values(S, cap_top, srt)
        win = self.winners(V)
        M = S.shape[0]
        rank = np.full((M, self.n), -1)
        eff = np.zeros((M, self.n))
        rows = np.arange(M)
        for c, (order, SS, el) in srt.items():
            idx = self.members[c]
            n_seat = np.minimum(el.sum(axis=1), self.L[c][win])
            pos = np.empty_like(order)
            np.put_along_axis(pos, order, np.arange(idx.size)[None, :].repeat(M, 0), 1)
            seated = pos < n_seat[:, None]
            rank[:, idx] = np.where(seated, pos, -1)
            eff[:, idx] = np.where(seated, self.E[c][win[:, None], np.minimum(pos, idx.size - 1)], 0.0)
        return win, rank, eff, srt, V

    def class_thresholds(self, S, rank, srt) -> np.ndarray:
        """Score each seated bidder must match to keep its seat within its class."""
        M = S.shape[0]
        g = np.zeros((M, self.n))
        for c, (order, SS, el) in srt.items():
            idx = self.members[c]
            r = rank[:, idx]
            nxt = np.minimum(r + 1, idx.size - 1)
            nxt_score = np.take_along_axis(np.where(el, SS, 0.0), np.maximum(nxt, 0), 1)
            has = (r >= 0) & (r + 1 < idx.size)
            nxt_el = np.take_along_axis(el, np.maximum(nxt, 0), 1)
            g[:, idx] = np.where(has & nxt_el, np.maximum(nxt_score, 0.0), 0.0)
        return g

    def _wins(self, V, win) -> np.ndarray:
        """Template ``win`` is the argmax of rows ``V`` under the lowest-index tie rule."""
        J = V.shape[-1]
        vw = np.take_along_axis(V, win[..., None], -1)
        j = np.arange(J)
        lower = j < win[..., None]
        ok = np.where(lower, vw > V, vw >= V)
        return ok.all(axis=-1)

    def retention(self, S, i: int, win, cap_top: bool = False) -> np.ndarray:
        """Least score of bidder ``i`` keeping template ``win`` optimal, per row.

        Each template objective is continuous and piecewise linear in one
        bidder's score with kinks at the other class members' scores, so the
        boundary of the winning region is found exactly by linear
        interpolation on the segment where the winner first loses.
        """
        M = S.shape[0]
        c = self.cls[i]
        others = [k for k in self.members[c] if k != i]
        own = S[:, i]
        pts = np.concatenate([S[:, others], np.zeros((M, 1)), own[:, None]], axis=1)
        pts = np.clip(pts, 0.0, own[:, None])
        pts = -np.sort(-pts, axis=1)                      # descending, first = own score
        B = pts.shape[1]
        S_rep = np.repeat(S, B, axis=0)
        S_rep[:, i] = pts.ravel()
        V = self.template_values(S_rep, cap_top).reshape(M, B, self.J)
        win_b = np.repeat(win[:, None], B, axis=1)
        ok = self._wins(V, win_b)
        ok[:, 0] = True                                   # the current score wins by definition
        lose = ~ok
        first_lose = np.where(lose.any(axis=1), lose.argmax(axis=1), B)
        res = np.zeros(M)
        rows = np.nonzero(first_lose < B)[0]
        if rows.size:
            k = first_lose[rows]
            hi_s, lo_s = pts[rows, k - 1], pts[rows, k]
            v_hi, v_lo = V[rows, k - 1], V[rows, k]
            w = win[rows]
            d_hi = np.take_along_axis(v_hi, w[:, None], 1) - v_hi
            d_lo = np.take_along_axis(v_lo, w[:, None], 1) - v_lo
            # crossing point of each competing template on the segment
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(d_hi - d_lo > 0, -d_lo / (d_hi - d_lo), 1.0)
            frac = np.clip(frac, 0.0, 1.0)
            frac = np.where(d_lo < 0, frac, 0.0)
            # strict competitors (lower index) lose at equality, so the boundary is the same point
            cross = lo_s[:, None] + frac * (hi_s - lo_s)[:, None]
            res[rows] = cross.max(axis=1)
        return res

    def prices(self, S, pricing: str, cap_top: bool = False, arrays=None,
               only: Sequence[int] | None = None) -> np.ndarray:
        """Per-click bid-space prices of seated bidders (zero for the rest)."""
        if pricing not in PRICINGS:
            raise DomainError(f"unknown pricing {pricing!r}")
        win, rank, eff, srt, V = arrays or self.outcome_arrays(S, cap_top)
        g = self.class_thresholds(S, rank, srt)
        P = np.zeros_like(S)
        for i in (range(self.n) if only is None else only):
            seated = rank[:, i] >= 0
            if not seated.any():
                continue
            thr = g[:, i]
            if pricing == CONSIDERATE:
                thr = np.maximum(thr, self.retention(S, i, win, cap_top))
            P[:, i] = np.where(seated, self.bid_of_score(i, thr), 0.0)
        return P

    # -- single profile helpers -------------------------------------------------
    def outcome(self, bids=None, cap_top: bool = False, pricing: str | None = None) -> TemplateOutcome:
        bids = np.array([b.b for b in self.bidders]) if bids is None else np.asarray(bids, float)
        S = self.scores(bids)
        arrays = self.outcome_arrays(S, cap_top)
        win, rank, eff, srt, V = arrays
        assignment = {c: {} for c in self.class_ids}
        for i in range(self.n):
            if rank[0, i] >= 0:
                assignment[self.cls[i]][int(rank[0, i])] = i
        assignment = {c: dict(sorted(a.items())) for c, a in assignment.items()}
        objective = float((S[0] * eff[0]).sum())
        prices = self.prices(S, pricing, cap_top, arrays)[0] if pricing else None
        return TemplateOutcome(int(win[0]), assignment, eff[0].copy(), objective, prices)

    def received_effect(self, i: int, own_scores, bids, cap_top: bool = False) -> np.ndarray:
        S = self.scores(bids)
        S = np.repeat(S, len(own_scores), axis=0)
        S[:, i] = own_scores
        _, _, eff, _, _ = self.outcome_arrays(S, cap_top)
        return eff[:, i]


# -- public operations ----------------------------------------------------------
def allocate_templates(weights: ObjectiveWeights, models, bidders, templates: TemplateSet,
                       bids=None, cap_top: bool = False) -> TemplateOutcome:
    """Truthful template allocation (no prices): best class ranking in the best template."""
    return TemplateAuction(bidders, templates, weights, models).outcome(bids, cap_top)


def template_considerate_gsp(bidders, bids, templates: TemplateSet,
                             weights: ObjectiveWeights = WELFARE, models=None) -> np.ndarray:
    """Least bid keeping both the class seat and the winning template optimal."""
    auc = TemplateAuction(bidders, templates, weights, models)
    return auc.outcome(bids, pricing=CONSIDERATE).prices


def template_indifferent_gsp(bidders, bids, templates: TemplateSet,
                             weights: ObjectiveWeights = WELFARE, models=None,
                             cap_top: bool = False) -> np.ndarray:
    """GSP within each class of the winning template, as if it were the only template.

    ``cap_top`` selects the template with each class's top score lowered to
    its second score.
    """
    auc = TemplateAuction(bidders, templates, weights, models)
    return auc.outcome(bids, cap_top, pricing=INDIFFERENT).prices


def second_highest_allocate(bidders, bids, templates: TemplateSet,
                            weights: ObjectiveWeights = WELFARE, models=None,
                            tol: float = 1e-9) -> TemplateOutcome:
    """Select the template on second-highest scores; requires class-selection templates."""
    if not is_class_selection(templates, tol):
        raise DomainError("second-highest allocation needs a class-selection template set")
    return TemplateAuction(bidders, templates, weights, models).outcome(bids, cap_top=True)


def truthful_template_payments(weights: ObjectiveWeights, bidders, templates: TemplateSet,
                               grid: int = 256, models=None, bids=None) -> np.ndarray:
    """Myerson per-click prices of the truthful template auction.

    Each winner's received slot effect is probed on a grid of its own score
    between zero and its actual score, jumps are located by bisection, and
    the payment is the sum of jump thresholds times jump sizes.
    """
    auc = TemplateAuction(bidders, templates, weights, models)
    bids = np.array([b.b for b in auc.bidders]) if bids is None else np.asarray(bids, float)
    S = auc.scores(bids)[0]
    out = auc.outcome(bids)
    prices = np.zeros(auc.n)
    for i in out.shown:
        if out.effects[i] <= 0:
            continue
        own = S[i]
        cls_scores = S[auc.members[auc.cls[i]]]
        probe = np.unique(np.concatenate([np.linspace(0.0, own, grid),
                                          cls_scores[(cls_scores >= 0) & (cls_scores <= own)]]))
        x = auc.received_effect(i, probe, bids)
        if np.any(np.diff(x) < -1e-12):
            raise InternalError(f"received effect of bidder {i} is not monotone in its bid")
        # below the eligibility floor the bidder is never shown
        pay = x[0] * auc.floor_bid(i)
        for k in np.nonzero(np.diff(x) > 0)[0]:
            lo, hi = probe[k], probe[k + 1]
            x_lo = x[k]
            while hi - lo > _REL_TOL * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                if auc.received_effect(i, [mid], bids)[0] > x_lo:
                    hi = mid
                else:
                    lo = mid
            pay += float(auc.bid_of_score(i, hi)) * (x[k + 1] - x[k])
        prices[i] = pay / out.effects[i]
    return prices
