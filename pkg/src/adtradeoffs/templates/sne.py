"""Symmetric Nash equilibria of template auctions: verification and grid search.

A profile is an SNE when (i) no bidder gains by a unilateral deviation and (ii)
no bidder prefers another same-class bidder's slot at that bidder's price,
mapped into its own bid space through the rank score.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from ..errors import BudgetExceededError, DomainError, InternalError
from ..position_auction import BidderProfile, lowest_sne_bids
from ..valuations import psi_values
from .core import (CONSIDERATE, INDIFFERENT, PRICINGS, TemplateAuction, is_class_selection)

STANDARD = "standard"
SECOND_HIGHEST = "second-highest"
SELECTIONS = (STANDARD, SECOND_HIGHEST)


class SneVerdict(NamedTuple):
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _price_scores(auc: TemplateAuction, P: np.ndarray) -> np.ndarray:
    """Rank score each bidder would have when bidding its own price."""
    out = np.empty_like(P)
    for c, idx in auc.members.items():
        out[:, idx] = auc.w[idx] * psi_values(auc.weights, auc.models[c], P[:, idx])
    return out


def _envy_gaps(auc: TemplateAuction, eff, P, util) -> np.ndarray:
    """Largest ``x_j (t_i - pi_ij) - u_i`` over same-class pairs, per row."""
    M = eff.shape[0]
    worst = np.full(M, -np.inf)
    PS = _price_scores(auc, P)
    for c, idx in auc.members.items():
        for i, j in itertools.permutations(idx, 2):
            pij = auc.bid_of_score(i, PS[:, j])
            gap = eff[:, j] * (auc.t[i] - pij) - util[:, i]
            gap = np.where(eff[:, j] > 0, gap, -np.inf)
            worst = np.maximum(worst, gap)
    return worst


def _tolerance(util, tol):
    return tol * np.maximum(1.0, np.abs(util))


def deviation_grids(auc: TemplateAuction, points: int, conservative: bool = True,
                    anchors: Mapping[int, Sequence[float]] | None = None,
                    bid_cap: float | None = None) -> list[np.ndarray]:
    """Equispaced bids on ``[0, t_i]`` (or ``[0, bid_cap]``) plus anchors and ``t_i``."""
    grids = []
    for i in range(auc.n):
        top = auc.t[i] if conservative else (bid_cap if bid_cap is not None else 2.0 * auc.t.max())
        g = [np.linspace(0.0, top, points), [auc.t[i]] if auc.t[i] <= top else []]
        if anchors and i in anchors:
            g.append([a for a in anchors[i] if 0 <= a <= top])
        grids.append(np.unique(np.concatenate([np.asarray(x, float) for x in g])))
    return grids


def check_profiles(auc: TemplateAuction, B: np.ndarray, pricing: str, cap_top: bool,
                   grids: Sequence[np.ndarray], tol: float = 1e-9, detail: bool = False):
    """Mask of rows of ``B`` that are SNE against deviations on ``grids``.

    With ``detail`` a message for the first row is returned as well.
    """
    B = np.atleast_2d(np.asarray(B, float))
    M = B.shape[0]
    S = auc.scores(B)
    arrays = auc.outcome_arrays(S, cap_top)
    win, rank, eff, _, _ = arrays
    P = auc.prices(S, pricing, cap_top, arrays)
    util = eff * (auc.t[None, :] - P)
    ok = _envy_gaps(auc, eff, P, util) <= _tolerance(util.min(axis=1), tol)
    msg = "" if ok[0] else "envy between same-class bidders"
    for i in range(auc.n):
        live = np.nonzero(ok)[0]
        if live.size == 0:
            break
        G = grids[i]
        Bd = np.repeat(B[live], G.size, axis=0)
        Bd[:, i] = np.tile(G, live.size)
        Sd = auc.scores(Bd)
        ad = auc.outcome_arrays(Sd, cap_top)
        Pd = auc.prices(Sd, pricing, cap_top, ad, only=[i])
        ud = (ad[2][:, i] * (auc.t[i] - Pd[:, i])).reshape(live.size, G.size)
        base = util[live, i]
        gain = ud.max(axis=1) - base
        bad = gain > _tolerance(base, tol)
        if detail and bad.size and live[0] == 0 and bad[0] and not msg:
            k = int(ud[0].argmax())
            msg = f"bidder {i} gains by bidding {G[k]:.6g}: {ud[0, k]:.6g} > {base[0]:.6g}"
        ok[live[bad]] = False
    if detail:
        return ok, (msg or "ok")
    return ok


def verify_template_sne(auc: TemplateAuction, bids, pricing: str = CONSIDERATE,
                        cap_top: bool = False, deviation_grid: int = 1000,
                        conservative: bool = True, anchors=None, tol: float = 1e-9) -> SneVerdict:
    """Exact envy checks plus Nash deviations on a per-bidder bid grid."""
    bids = np.asarray(bids, float)
    if conservative and np.any(bids > auc.t + 1e-12):
        return SneVerdict(False, "a bid exceeds its value under the conservative assumption")
    grids = deviation_grids(auc, deviation_grid, conservative, anchors,
                            bid_cap=None if conservative else 2.0 * max(auc.t.max(), bids.max()))
    ok, msg = check_profiles(auc, bids[None, :], pricing, cap_top, grids, tol, detail=True)
    return SneVerdict(bool(ok[0]), msg)


@dataclass
class GridSearchResult:
    found: bool
    bids: np.ndarray | None
    template: int | None
    resolution: tuple[int, ...]
    candidates: int
    message: str = ""

    def __bool__(self) -> bool:
        return self.found


def _class_candidates(auc: TemplateAuction, c: int, T: int, grids, pricing: str,
                      budget: int, tol: float):
    """Class-``c`` bid vectors that can be envy-free when template ``T`` wins.

    Uses only the class's own bids: every considerate price lies between the
    class threshold and the bidder's own bid, which yields a necessary
    condition for each envy pair.
    """
    idx = auc.members[c]
    sizes = [grids[i].size for i in idx]
    total = int(np.prod(sizes, dtype=float))
    if total > budget:
        raise BudgetExceededError(
            f"class {c} has {total} grid profiles, above the budget {budget}; "
            "use a coarser grid or fewer bidders")
    mesh = np.stack(np.meshgrid(*[grids[i] for i in idx], indexing="ij"), -1).reshape(-1, idx.size)
    if not auc.E[c][T].any() and auc.L[c][T] == 0:
        return mesh
    w = auc.w[idx]
    Sc = w * psi_values(auc.weights, auc.models[c], mesh)
    el = Sc >= 0
    key = np.where(el, -Sc, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    SS = np.take_along_axis(Sc, order, 1)
    els = np.take_along_axis(el, order, 1)
    M, m = mesh.shape
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(m)[None, :].repeat(M, 0), 1)
    n_seat = np.minimum(els.sum(axis=1), auc.L[c][T])
    seated = pos < n_seat[:, None]
    eff = np.where(seated, auc.E[c][T][np.minimum(pos, m - 1)], 0.0)
    nxt = np.minimum(pos + 1, m - 1)
    nxt_sc = np.take_along_axis(SS, nxt, 1)
    nxt_el = np.take_along_axis(els, nxt, 1) & (pos + 1 < m)
    g_sc = np.where(seated & nxt_el, np.maximum(nxt_sc, 0.0), 0.0)
    g = np.empty_like(g_sc)
    for k, i in enumerate(idx):
        g[:, k] = np.where(seated[:, k], auc.bid_of_score(i, g_sc[:, k]), 0.0)
    p_hi = mesh if pricing == CONSIDERATE else g
    p_hi = np.where(seated, p_hi, 0.0)
    util_hi = eff * (auc.t[idx][None, :] - g)
    ok = np.ones(M, bool)
    ps_hi = w * psi_values(auc.weights, auc.models[c], p_hi)
    for a, b in itertools.permutations(range(m), 2):
        pij = auc.bid_of_score(idx[a], ps_hi[:, b])
        lhs = eff[:, b] * (auc.t[idx[a]] - pij)
        ok &= ~((eff[:, b] > 0) & (lhs > util_hi[:, a] + tol * np.maximum(1.0, np.abs(util_hi[:, a]))))
    return mesh[ok]


def sne_grid_search(auc: TemplateAuction, pricing: str = CONSIDERATE, selection: str = STANDARD,
                    grid: int = 15, conservative: bool = True, anchors=None,
                    budget: int = 10_000_000, chunk: int = 20_000, workers: int = 1,
                    tol: float = 1e-9) -> GridSearchResult:
    """Exhaustive search for an SNE over per-bidder bid grids.

    Bids range over equispaced grids on ``[0, t_i]`` (plus anchors and the
    value itself).  For each candidate winning template, class bid vectors are
    first filtered by a necessary envy condition; the surviving combinations
    are then checked exactly.  Deviations are taken on the same grids.  The
    lexicographically smallest passing profile (by per-bidder grid index) is
    returned; ``found=False`` is evidence at this resolution only.
    """
    if pricing not in PRICINGS:
        raise DomainError(f"unknown pricing {pricing!r}")
    if selection not in SELECTIONS:
        raise DomainError(f"unknown allocation rule {selection!r}")
    cap_top = selection == SECOND_HIGHEST
    if cap_top and not is_class_selection(auc.templates):
        raise DomainError("second-highest allocation needs a class-selection template set")
    grids = deviation_grids(auc, grid, conservative, anchors)
    resolution = tuple(g.size for g in grids)
    passing = []
    checked = 0
    for T in range(auc.J):
        per_class = [(_class_candidates(auc, c, T, grids, pricing, budget, tol), auc.members[c])
                     for c in auc.class_ids]
        total = int(np.prod([len(pc) for pc, _ in per_class], dtype=float))
        if total == 0:
            continue
        if total > budget:
            raise BudgetExceededError(
                f"{total} candidate profiles for template {T} exceed the budget {budget}; "
                "use a coarser grid or fewer bidders")
        index_ranges = [range(len(pc)) for pc, _ in per_class]
        combos = np.array(list(itertools.product(*index_ranges)), dtype=np.int64)

        def run(block):
            B = np.empty((block.shape[0], auc.n))
            for k, (pc, idx) in enumerate(per_class):
                B[:, idx] = pc[block[:, k]]
            keep = auc.winners(auc.template_values(auc.scores(B), cap_top)) == T
            B = B[keep]
            if B.shape[0] == 0:
                return B
            return B[check_profiles(auc, B, pricing, cap_top, grids, tol)]

        blocks = [combos[s:s + chunk] for s in range(0, len(combos), chunk)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                found = list(pool.map(run, blocks))
        else:
            found = [run(b) for b in blocks]
        checked += total
        passing.extend(f for f in found if f.shape[0])
    if not passing:
        return GridSearchResult(False, None, None, resolution, checked,
                                f"no SNE on the grid (points per bidder: {list(resolution)})")
    B = np.concatenate(passing, axis=0)
    idx = np.stack([np.searchsorted(grids[i], B[:, i]) for i in range(auc.n)], axis=1)
    first = np.lexsort(idx.T[::-1])[0]
    bids = B[first]
    tpl = int(auc.winners(auc.template_values(auc.scores(bids), cap_top))[0])
    return GridSearchResult(True, bids, tpl, resolution, checked, "found")


def class_selection_sne(auc: TemplateAuction, verify: bool = True,
                        deviation_grid: int = 1000) -> np.ndarray:
    """SNE bids for a class-selection template set under second-highest allocation.

    Each class plays the lowest GSP equilibrium of the first template in which
    it holds slots, and its top bidder then lowers its bid to the second bid
    (the smallest float above it when the tie would reverse the order).  Class
    selection makes the class profile an equilibrium in every template, and a
    single bidder cannot raise its class's second score, so the chosen template
    is stable.
    """
    if not is_class_selection(auc.templates):
        raise DomainError("the construction needs a class-selection template set")
    bids = auc.t.copy()
    for c, idx in auc.members.items():
        rows = np.nonzero(auc.E[c].any(axis=1))[0]
        if rows.size == 0:
            continue
        eff = auc.E[c][rows[0]]
        eff = eff[eff > 0]
        types = [BidderProfile(auc.t[i], auc.w[i]) for i in idx]
        local = lowest_sne_bids(auc.rules[c], types, eff, strict=False)
        sc = auc.w[idx] * psi_values(auc.weights, auc.models[c], local)
        order = np.argsort(np.where(sc >= 0, -sc, np.inf), kind="stable")
        if idx.size > 1 and sc[order[1]] >= 0:
            top, sec = order[0], order[1]
            lowered = float(auc.bid_of_score(idx[top], sc[sec]))
            if top > sec:
                lowered = np.nextafter(lowered, np.inf)
            local[top] = min(local[top], lowered)
        bids[idx] = local
    if verify:
        verdict = verify_template_sne(auc, bids, INDIFFERENT, cap_top=True,
                                      deviation_grid=deviation_grid)
        if not verdict:
            raise InternalError(f"class-selection construction failed verification: {verdict.message}")
    return bids
