"""Parameter sweeps over ranking rules and their CSV rows."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, TextIO

import numpy as np

from ..constrained import FrontierPoint, pareto_filter
from ..errors import AuctionError, ConfigError
from ..objectives import TRUTHFUL, EstimatorConfig, MetricsRecord, Scenario, estimate_metrics
from ..position_auction import (ImpressionReserve, OptimalPsi, RankingRule, Standard, Subtractive,
                                TwoParam)
from ..valuations import ObjectiveWeights

RULE_PARAMS = {
    "standard": ("r",),
    "subtractive": ("r",),
    "impression": ("rho",),
    "twoparam": ("r", "rho"),
    "optimal": ("alpha", "beta", "gamma"),
}


def make_rule(name: str, params: dict, scenario: Scenario | None = None) -> RankingRule:
    """Rule ``name`` with the given parameters; unknown names or keys raise ConfigError."""
    if name not in RULE_PARAMS:
        raise ConfigError(f"unknown rule {name!r}; choose from {', '.join(RULE_PARAMS)}")
    extra = set(params) - set(RULE_PARAMS[name])
    if extra:
        raise ConfigError(f"rule {name!r} takes {', '.join(RULE_PARAMS[name])}; got {', '.join(sorted(extra))}")
    p = {k: float(v) for k, v in params.items()}
    if name == "standard":
        return Standard(p.get("r", 0.0))
    if name == "subtractive":
        return Subtractive(p.get("r", 0.0))
    if name == "impression":
        return ImpressionReserve(p.get("rho", 0.0))
    if name == "twoparam":
        return TwoParam(p.get("r", 0.0), p.get("rho", 0.0))
    weights = ObjectiveWeights(p.get("alpha", 1.0), p.get("beta", 0.0), p.get("gamma", 0.0))
    models = scenario.value_models() if scenario is not None else None
    return OptimalPsi(weights, models)


def _axis(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range {spec!r} must read lo:hi:count")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ConfigError(f"range {spec!r} needs a positive count")
        return np.linspace(lo, hi, n).tolist()
    return [float(x) for x in spec.split(",") if x.strip()]


def parse_grid(specs: str | Iterable[str] | None) -> list[dict]:
    """Cartesian grid from ``"r=0:1:11"`` or ``"rho=0,0.1,0.2"`` items.

    Items may be passed separately or joined with ``;``.
    """
    if specs is None:
        return [{}]
    if isinstance(specs, str):
        specs = [specs]
    names, axes = [], []
    for item in (x for s in specs for x in s.split(";") if x.strip()):
        if "=" not in item:
            raise ConfigError(f"grid item {item!r} must read name=values")
        k, v = item.split("=", 1)
        k = k.strip()
        if k in names:
            raise ConfigError(f"parameter {k!r} given twice in the grid")
        try:
            vals = _axis(v.strip())
        except ValueError as exc:
            raise ConfigError(f"grid item {item!r}: {exc}") from exc
        if not vals:
            raise ConfigError(f"grid item {item!r} has no values")
        names.append(k)
        axes.append(vals)
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


@dataclass
class SweepRow:
    rule: str
    r: float | str = ""
    rho: float | str = ""
    alpha: float | str = ""
    beta: float | str = ""
    gamma: float | str = ""
    impressions: float | str = ""
    impressions_se: float | str = ""
    clicks: float | str = ""
    clicks_se: float | str = ""
    welfare: float | str = ""
    welfare_se: float | str = ""
    revenue: float | str = ""
    revenue_se: float | str = ""
    samples: int = 0
    seed: int = 0
    error: str = ""

    COLUMNS = ()  # filled below

    @classmethod
    def from_metrics(cls, rule: str, params: dict, mean: MetricsRecord, se: MetricsRecord,
                     samples: int, seed: int) -> "SweepRow":
        row = cls(rule, samples=samples, seed=seed, **params)
        for f in MetricsRecord.FIELDS:
            setattr(row, f, getattr(mean, f))
            setattr(row, f + "_se", getattr(se, f))
        return row

    def metrics(self) -> MetricsRecord:
        return MetricsRecord(*(float(getattr(self, f)) for f in MetricsRecord.FIELDS))

    def errors(self) -> MetricsRecord:
        return MetricsRecord(*(float(getattr(self, f + "_se")) for f in MetricsRecord.FIELDS))

    def params(self) -> dict:
        return {k: getattr(self, k) for k in ("r", "rho", "alpha", "beta", "gamma")
                if getattr(self, k) != ""}


SweepRow.COLUMNS = tuple(f.name for f in fields(SweepRow))


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(rows: Iterable, fh: TextIO, columns: tuple[str, ...] | None = None) -> None:
    rows = list(rows)
    columns = columns or (rows[0].COLUMNS if rows else SweepRow.COLUMNS)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        d = asdict(row)
        w.writerow([_fmt(d[c]) for c in columns])


def read_csv(fh: TextIO) -> list[SweepRow]:
    """Parse rows written by :func:`write_csv`; numbers come back as floats."""
    out = []
    for rec in csv.DictReader(fh):
        kw = {}
        for f in fields(SweepRow):
            v = rec.get(f.name, "")
            if f.name in ("rule", "error") or v == "":
                kw[f.name] = v
            elif f.name in ("samples", "seed"):
                kw[f.name] = int(v)
            else:
                kw[f.name] = float(v)
        out.append(SweepRow(**kw))
    return out


def _parallel(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_sweep(scenario: Scenario, rule: str, grid: list[dict], pricing: str = TRUTHFUL,
              est: EstimatorConfig | None = None) -> list[SweepRow]:
    """One row per grid point, in grid order.

    Grid points run on ``est.workers`` threads; every point draws the same
    seeded batches, so the rows do not depend on the thread count.  A point
    whose rule and pricing do not fit together yields a row with ``error`` set.
    """
    est = est or EstimatorConfig()
    if rule not in RULE_PARAMS:
        raise ConfigError(f"unknown rule {rule!r}; choose from {', '.join(RULE_PARAMS)}")
    inner = EstimatorConfig(est.samples, est.seed, est.batch, 1)

    def run(params: dict) -> SweepRow:
        try:
            mean, se = estimate_metrics(scenario, make_rule(rule, params, scenario), pricing, inner)
        except ConfigError:
            raise
        except (AuctionError, ValueError) as exc:
            row = SweepRow(rule, samples=int(est.samples), seed=int(est.seed), **params)
            row.error = f"{type(exc).__name__}: {exc}"
            return row
        return SweepRow.from_metrics(rule, params, mean, se, int(est.samples), int(est.seed))

    return _parallel(run, grid, est.workers)


def frontier_rows(rows: list[SweepRow], axes=("impressions", "revenue"),
                  maximize=(False, True)) -> list[SweepRow]:
    """Rows on the Pareto frontier of ``axes`` (error rows are dropped)."""
    ok = [r for r in rows if not r.error]
    pts = [FrontierPoint({"k": k}, r.metrics(), r.errors()) for k, r in enumerate(ok)]
    return [ok[p.params["k"]] for p in pareto_filter(pts, axes, maximize)]
