"""Pareto frontiers over rule parameters and a chord test of their concavity."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from ..objectives import TRUTHFUL, EstimatorConfig, MetricsRecord, estimate_metrics
from ..position_auction import RankingRule
from .discrete import DiscreteInstance


@dataclass(frozen=True)
class FrontierPoint:
    params: Mapping[str, float]
    metrics: MetricsRecord
    se: MetricsRecord = field(default_factory=MetricsRecord)

    def __post_init__(self):
        if not np.all(np.isfinite(self.metrics.as_array())):
            raise ValueError(f"non-finite metrics at {dict(self.params)}")

    def value(self, axis: str) -> float:
        return getattr(self.metrics, axis)

    def error(self, axis: str) -> float:
        return getattr(self.se, axis)


def evaluate_grid(scenario, family: Callable[..., RankingRule], grid: Sequence[Mapping[str, float]],
                  est: EstimatorConfig | None = None, pricing: str = TRUTHFUL) -> list[FrontierPoint]:
    """Metrics at every grid point; exact for a :class:`DiscreteInstance`."""
    grid = [dict(g) for g in grid]
    if isinstance(scenario, DiscreteInstance):
        return [FrontierPoint(g, scenario.rule_metrics(family(**g))) for g in grid]
    est = est or EstimatorConfig()
    # grid points run in parallel; each point evaluates its own batches serially
    inner = EstimatorConfig(est.samples, est.seed, est.batch, 1)

    def run(g):
        mean, se = estimate_metrics(scenario, family(**g), pricing, inner)
        return FrontierPoint(g, mean, se)

    if est.workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=est.workers) as pool:
            return list(pool.map(run, grid))
    return [run(g) for g in grid]


def dominates(p: FrontierPoint, q: FrontierPoint, axes: tuple[str, str],
              maximize: tuple[bool, bool]) -> bool:
    better_eq, strict = True, False
    for ax, up in zip(axes, maximize):
        a, b = p.value(ax), q.value(ax)
        if not up:
            a, b = -a, -b
        if a < b:
            better_eq = False
        elif a > b:
            strict = True
    return better_eq and strict


def pareto_filter(points: Sequence[FrontierPoint], axes=("impressions", "revenue"),
                  maximize=(False, True)) -> list[FrontierPoint]:
    """Non-dominated points sorted by the first axis.

    The default keeps the upper-left frontier: fewer impressions and more of
    the second measure are preferred.
    """
    sx = 1.0 if maximize[0] else -1.0
    sy = 1.0 if maximize[1] else -1.0
    # sweep from best first-axis value; keep a point iff it beats every earlier second-axis value
    order = sorted(range(len(points)),
                   key=lambda k: (-sx * points[k].value(axes[0]), -sy * points[k].value(axes[1])))
    kept, best_y, last = [], -np.inf, None
    for k in order:
        xy = (points[k].value(axes[0]), points[k].value(axes[1]))
        y = sy * xy[1]
        if y > best_y or xy == last:
            # exact duplicates of a kept point are not dominated either
            kept.append(points[k])
            best_y, last = max(y, best_y), xy
    kept.sort(key=lambda p: p.value(axes[0]))
    return kept


def build_frontier(scenario, family: Callable[..., RankingRule], grid, axes=("impressions", "revenue"),
                   est: EstimatorConfig | None = None, pricing: str = TRUTHFUL,
                   maximize=(False, True)) -> list[FrontierPoint]:
    """Evaluate ``family(**params)`` over ``grid`` and keep the Pareto-optimal points."""
    if len(grid) == 0:
        raise ValueError("the parameter grid is empty")
    return pareto_filter(evaluate_grid(scenario, family, grid, est, pricing), axes, maximize)


class ConcavityVerdict(NamedTuple):
    ok: bool
    violations: list

    def __bool__(self) -> bool:
        return self.ok


def concavity_check(points: Sequence[FrontierPoint], axes=("impressions", "revenue"),
                    slack: float | None = None, sigmas: float = 3.0) -> ConcavityVerdict:
    """Every interior point must lie on or above its neighbours' chord, less ``slack``.

    Without an explicit ``slack`` each point gets ``sigmas`` combined standard
    errors of the second axis (the point's own and the chord's).
    """
    if len(points) < 3:
        raise ValueError("at least three points are needed")
    xs = np.array([p.value(axes[0]) for p in points])
    if np.any(np.diff(xs) < 0):
        raise ValueError("points must be sorted by the first axis")
    ys = np.array([p.value(axes[1]) for p in points])
    es = np.array([p.error(axes[1]) for p in points])
    bad = []
    for k in range(1, len(points) - 1):
        x0, x1, x2 = xs[k - 1], xs[k], xs[k + 1]
        if x2 == x0:
            lam = 0.5
        else:
            lam = (x2 - x1) / (x2 - x0)
        chord = lam * ys[k - 1] + (1 - lam) * ys[k + 1]
        if slack is None:
            tol = sigmas * np.sqrt(es[k] ** 2 + (lam * es[k - 1]) ** 2 + ((1 - lam) * es[k + 1]) ** 2)
        else:
            tol = slack
        tol += 1e-12 * max(1.0, abs(chord))
        if ys[k] < chord - tol:
            bad.append((k, float(ys[k]), float(chord)))
    return ConcavityVerdict(not bad, bad)
