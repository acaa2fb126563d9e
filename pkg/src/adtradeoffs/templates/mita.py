"""The monotone image/text allocation (MITA).

Text ads are ranked by ``w psi_T(b)`` and image ads by ``w psi_I(b)``.  With
``S_j`` the cumulative text slot effect of the first ``j`` slots,

    C = { j : score_(j) * S_j >= score_image * s_image }

and the page shows the first ``max C`` text ads, or the best image ad when
``C`` is empty.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DomainError, InternalError, UnsupportedRuleError
from ..position_auction import BidderProfile, LinearScore, OptimalPsi, lowest_sne_bids
from ..valuations import ObjectiveWeights, ValueModel, psi_values
from .core import WELFARE, TemplateOutcome
from .sne import SneVerdict

TEXT, IMAGE = 0, 1
_BISECT_STEPS = 64


@dataclass(frozen=True)
class MitaInstance:
    """Text slots ``text_slots``, one image slot, and the two bidder groups.

    Bidders are ``(value, weight)`` pairs.  Bidder ``i < len(text)`` is the
    ``i``-th text bidder; the image bidders follow.
    """

    text_slots: tuple[float, ...]
    image_slot: float
    text: tuple[tuple[float, float], ...]
    image: tuple[tuple[float, float], ...] = ()
    weights: ObjectiveWeights = WELFARE
    text_model: ValueModel | None = None
    image_model: ValueModel | None = None
    rules: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = tuple(float(x) for x in self.text_slots)
        object.__setattr__(self, "text_slots", s)
        object.__setattr__(self, "text", tuple((float(t), float(w)) for t, w in self.text))
        object.__setattr__(self, "image", tuple((float(t), float(w)) for t, w in self.image))
        if not s:
            raise DomainError("at least one text slot is required")
        if any(x <= 0 for x in s) or any(a < b for a, b in zip(s, s[1:])):
            raise DomainError("text slot effects must be positive and non-increasing")
        if not self.image_slot > 0:
            raise DomainError("the image slot effect must be positive")
        for t, w in self.text + self.image:
            if t < 0 or not w > 0:
                raise DomainError("values must be non-negative and weights positive")
        rules = {TEXT: OptimalPsi(self.weights, self.text_model),
                 IMAGE: OptimalPsi(self.weights, self.image_model)}
        for r in rules.values():
            if not r.is_linear:
                raise UnsupportedRuleError("MITA needs a linear psi; fit one with linear_fit_virtual")
        object.__setattr__(self, "rules", rules)

    @property
    def k(self) -> int:
        return len(self.text_slots)

    @property
    def n_text(self) -> int:
        return len(self.text)

    @property
    def n(self) -> int:
        return len(self.text) + len(self.image)

    @property
    def t(self) -> np.ndarray:
        return np.array([t for t, _ in self.text + self.image])

    @property
    def w(self) -> np.ndarray:
        return np.array([w for _, w in self.text + self.image])

    def cls(self, i: int) -> int:
        return TEXT if i < self.n_text else IMAGE

    def members(self, c: int) -> np.ndarray:
        return np.arange(self.n_text) if c == TEXT else np.arange(self.n_text, self.n)

    # -- scores -------------------------------------------------------------
    def scores(self, bids) -> np.ndarray:
        B = np.atleast_2d(np.asarray(bids, float))
        S = np.empty_like(B)
        w = self.w
        nt = self.n_text
        S[:, :nt] = w[:nt] * psi_values(self.weights, self.text_model, B[:, :nt])
        S[:, nt:] = w[nt:] * psi_values(self.weights, self.image_model, B[:, nt:])
        return S

    def bid_of_score(self, i: int, s):
        rule = self.rules[self.cls(i)]
        w = self.w[i]
        return np.maximum(rule.inverse(np.asarray(s, float), w), rule.floor(w))


def mita_arrays(m: MitaInstance, S: np.ndarray):
    """``(jstar, rank, effect)`` per score row.

    ``jstar`` is the number of text ads shown (0 for the image page), ``rank``
    the slot index of each bidder in its class (-1 when not shown).
    """
    M = S.shape[0]
    nt, k = m.n_text, m.k
    rank = np.full((M, m.n), -1)
    eff = np.zeros((M, m.n))
    img = S[:, nt:]
    if img.shape[1]:
        top_img = np.argmax(img, axis=1)
        img_score = img[np.arange(M), top_img]
    else:
        top_img = np.zeros(M, int)
        img_score = np.full(M, -np.inf)
    threshold = np.maximum(img_score, 0.0) * m.image_slot
    jstar = np.zeros(M, int)
    if nt:
        St = S[:, :nt]
        order = np.argsort(np.where(St >= 0, -St, np.inf), axis=1, kind="stable")
        SS = np.take_along_axis(St, order, 1)
        cum = np.cumsum(m.text_slots)
        for j in range(1, min(k, nt) + 1):
            inC = (SS[:, j - 1] >= 0) & (SS[:, j - 1] * cum[j - 1] >= threshold)
            jstar = np.where(inC, j, jstar)
        pos = np.empty_like(order)
        np.put_along_axis(pos, order, np.arange(nt)[None, :].repeat(M, 0), 1)
        shown = pos < jstar[:, None]
        slots = np.asarray(m.text_slots)
        rank[:, :nt] = np.where(shown, pos, -1)
        eff[:, :nt] = np.where(shown, slots[np.minimum(pos, k - 1)], 0.0)
    if img.shape[1]:
        show_img = (jstar == 0) & (img_score >= 0)
        rows = np.nonzero(show_img)[0]
        rank[rows, nt + top_img[rows]] = 0
        eff[rows, nt + top_img[rows]] = m.image_slot
    return jstar, rank, eff


def mita_allocate(m: MitaInstance, bids) -> TemplateOutcome:
    """Outcome at one bid profile; ``template`` is the number of text ads shown."""
    S = m.scores(bids)
    jstar, rank, eff = mita_arrays(m, S)
    assignment = {TEXT: {}, IMAGE: {}}
    for i in range(m.n):
        if rank[0, i] >= 0:
            assignment[m.cls(i)][int(rank[0, i])] = i
    assignment = {c: dict(sorted(a.items())) for c, a in assignment.items()}
    objective = float((S[0] * eff[0]).sum())
    return TemplateOutcome(int(jstar[0]), assignment, eff[0].copy(), objective)


def mita_prices(m: MitaInstance, B: np.ndarray, arrays=None, only: Sequence[int] | None = None) -> np.ndarray:
    """Least bid keeping each shown ad on the page in the same slot or better.

    This is the considerate rule for MITA: it covers both the within-class
    threshold and the page layout.  Computed by bisection on the bid, which is
    valid because the allocation is monotone in each bid.
    """
    B = np.atleast_2d(np.asarray(B, float))
    S = m.scores(B)
    _, rank, _ = arrays if arrays is not None else mita_arrays(m, S)
    P = np.zeros_like(B)
    for i in (range(m.n) if only is None else only):
        rows = np.nonzero(rank[:, i] >= 0)[0]
        if rows.size == 0:
            continue
        target = rank[rows, i]
        lo = np.zeros(rows.size)
        hi = B[rows, i].copy()
        Bi = B[rows].copy()

        def keeps(b):
            Bi[:, i] = b
            _, r, _ = mita_arrays(m, m.scores(Bi))
            return (r[:, i] >= 0) & (r[:, i] <= target)

        # the lower end may already keep the slot; then it is the price
        at_lo = keeps(lo)
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            ok = keeps(mid)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        P[rows, i] = np.where(at_lo, lo, hi)
    return P


def _envy_gap(m: MitaInstance, B, eff, P, util) -> np.ndarray:
    M = B.shape[0]
    worst = np.full(M, -np.inf)
    t, w = m.t, m.w
    for c in (TEXT, IMAGE):
        idx = m.members(c)
        model = m.text_model if c == TEXT else m.image_model
        PS = w[idx] * psi_values(m.weights, model, P[:, idx])
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                if i == j:
                    continue
                pij = m.bid_of_score(i, PS[:, b])
                gap = np.where(eff[:, j] > 0, eff[:, j] * (t[i] - pij) - util[:, i], -np.inf)
                worst = np.maximum(worst, gap)
    return worst


def mita_verify_sne(m: MitaInstance, bids, deviation_grid: int = 1000,
                    tol: float = 1e-9) -> SneVerdict:
    """Envy checks and conservative grid deviations under MITA with considerate prices."""
    bids = np.asarray(bids, float)
    t = m.t
    if np.any(bids > t + 1e-12):
        return SneVerdict(False, "a bid exceeds its value")
    B = bids[None, :]
    S = m.scores(B)
    arrays = mita_arrays(m, S)
    eff = arrays[2]
    P = mita_prices(m, B, arrays)
    util = eff * (t - P)
    scale = tol * np.maximum(1.0, np.abs(util).max())
    if _envy_gap(m, B, eff, P, util)[0] > scale:
        return SneVerdict(False, "envy between same-class bidders")
    for i in range(m.n):
        G = np.unique(np.concatenate([np.linspace(0.0, t[i], deviation_grid), [t[i]]]))
        Bd = np.repeat(B, G.size, axis=0)
        Bd[:, i] = G
        ad = mita_arrays(m, m.scores(Bd))
        Pd = mita_prices(m, Bd, ad, only=[i])
        ud = ad[2][:, i] * (t[i] - Pd[:, i])
        k = int(np.argmax(ud))
        if ud[k] - util[0, i] > tol * max(1.0, abs(util[0, i])):
            return SneVerdict(False, f"bidder {i} gains by bidding {G[k]:.6g}: "
                                     f"{ud[k]:.6g} > {util[0, i]:.6g}")
    return SneVerdict(True, "ok")


def mita_sne_construct(m: MitaInstance, verify: bool = True, deviation_grid: int = 1000) -> np.ndarray:
    """SNE bids reproducing the truthful MITA outcome.

    If the image page wins, every bidder bids its value.  Otherwise image
    bidders bid their values and text bidders play the lowest equilibrium of
    the text-only auction with per-impression reserve
    ``score_image * s_image / S_jstar``.
    """
    t = m.t
    bids = t.copy()
    S = m.scores(t)
    jstar, _, _ = mita_arrays(m, S)
    jstar = int(jstar[0])
    if jstar > 0:
        nt = m.n_text
        img = S[0, nt:]
        img_val = max(float(img.max()), 0.0) * m.image_slot if img.size else 0.0
        rho = img_val / float(np.sum(m.text_slots[:jstar]))
        A, c, _, _ = m.rules[TEXT].linear_form()
        rule = LinearScore(a=A, c=c, r=c, rho=rho)
        types = [BidderProfile(tv, wv) for tv, wv in m.text]
        bids[:nt] = lowest_sne_bids(rule, types, m.text_slots, strict=False)
    if verify:
        want, got = mita_allocate(m, t), mita_allocate(m, bids)
        if want.template != got.template or want.assignment != got.assignment:
            raise InternalError("constructed bids do not reproduce the truthful MITA outcome")
        verdict = mita_verify_sne(m, bids, deviation_grid)
        if not verdict:
            raise InternalError(f"constructed bids fail SNE verification: {verdict.message}")
    return bids
