"""Replay of logged bids under a different ranking rule.

Bids are taken as they were logged: advertisers do not react to the new
rule.  Values are unknown in a log, so welfare is not reported.
"""
from __future__ import annotations

import csv
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from ..errors import ConfigError
from ..objectives import outcome_metrics
from ..position_auction import BidderProfile, SlotLayout, as_slots, priced_outcome
from .sweep import make_rule

HEADER = ("auction_id", "bidder_id", "bid", "weight")


class ReplayRecord(NamedTuple):
    auction_id: str
    bidder_id: str
    bid: float
    weight: float


@dataclass
class ReplayLog:
    auctions: "OrderedDict[str, list[ReplayRecord]]"
    skipped: int = 0

    @property
    def n_auctions(self) -> int:
        return len(self.auctions)


def _parse(row: list[str]) -> ReplayRecord | None:
    if len(row) != 4:
        return None
    aid, bid_id, b, w = (x.strip() for x in row)
    try:
        b, w = float(b), float(w)
    except ValueError:
        return None
    if not aid or not (math.isfinite(b) and b >= 0 and math.isfinite(w) and w > 0):
        return None
    return ReplayRecord(aid, bid_id, b, w)


def read_log(path: str | Path) -> ReplayLog:
    """Group records by auction in first-seen order, skipping malformed lines."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"replay log {str(p)!r} not found")
    auctions: OrderedDict[str, list[ReplayRecord]] = OrderedDict()
    skipped = 0
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is not None and tuple(x.strip() for x in first) != HEADER:
            # no header line: treat the first line as data
            rec = _parse(first)
            if rec is None:
                skipped += 1
            else:
                auctions.setdefault(rec.auction_id, []).append(rec)
        for row in reader:
            if not row or all(not x.strip() for x in row):
                continue
            rec = _parse(row)
            if rec is None:
                skipped += 1
                continue
            auctions.setdefault(rec.auction_id, []).append(rec)
    return ReplayLog(auctions, skipped)


@dataclass
class ReplayRow:
    rule: str
    r: float | str = ""
    rho: float | str = ""
    alpha: float | str = ""
    beta: float | str = ""
    gamma: float | str = ""
    auctions: int = 0
    impressions: float = 0.0
    clicks: float = 0.0
    revenue: float = 0.0
    skipped: int = 0

    COLUMNS = ("rule", "r", "rho", "alpha", "beta", "gamma", "auctions", "impressions",
               "clicks", "revenue", "skipped")


def replay_point(log: ReplayLog, rule, slots: SlotLayout):
    """Average ``(impressions, clicks, revenue)`` per auction under GSP prices."""
    imp = clk = rev = 0.0
    for records in log.auctions.values():
        bidders = [BidderProfile(r.bid, r.weight) for r in records]
        out = priced_outcome(rule, bidders, slots, "gsp")
        m = outcome_metrics(out)
        imp += m.impressions
        clk += m.clicks
        rev += m.revenue
    n = max(log.n_auctions, 1)
    return imp / n, clk / n, rev / n


def replay(log: ReplayLog | str | Path, rule: str, slots, grid: list[dict],
           workers: int = 1) -> list[ReplayRow]:
    """One row per parameter point; an empty log gives an empty report."""
    if not isinstance(log, ReplayLog):
        log = read_log(log)
    slots = as_slots(slots)
    if rule == "optimal":
        raise ConfigError("replay has no value distributions; choose a rule without psi")
    if log.n_auctions == 0:
        return []

    def run(params):
        imp, clk, rev = replay_point(log, make_rule(rule, params), slots)
        return ReplayRow(rule, auctions=log.n_auctions, impressions=imp, clicks=clk, revenue=rev,
                         skipped=log.skipped, **params)

    if workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, grid))
    return [run(p) for p in grid]
