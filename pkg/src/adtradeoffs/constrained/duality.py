"""Numerical weak and strong duality on discrete-type instances.

The primal maximises ``alpha0*revenue + beta0*welfare + gamma0*clicks`` over
randomised slot assignments ``y[profile, bidder, slot]`` whose interim click
curves are non-decreasing, subject to linear constraints on the same measures.
It is a linear program.  The dual function

    h(lam) = max_y  OBJ_0(y) + sum_k lam_k (OBJ_k(y) - theta_k)

is an unconstrained problem with shifted weights, solved by ranking on the
shifted score ``psi*`` whenever that score is monotone in the type.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

from ..errors import DomainError, InfeasibleError
from ..objectives import MetricsRecord
from .discrete import DiscreteInstance, _triple

GE = ">="
EQ = "="


@dataclass(frozen=True)
class LinearConstraint:
    """``alpha*revenue + beta*welfare + gamma*clicks  (>= | =)  theta``."""

    weights: tuple[float, float, float]
    theta: float
    sense: str = GE

    def __post_init__(self):
        w = tuple(float(x) for x in _triple(self.weights))
        object.__setattr__(self, "weights", w)
        if not all(np.isfinite(w)) or not any(w):
            raise DomainError("constraint weights must be finite and not all zero")
        if self.sense not in (GE, EQ):
            raise DomainError(f"sense must be '>=' or '=', got {self.sense!r}")


class _Program:
    """Sparse LP data for one discrete instance."""

    def __init__(self, inst: DiscreteInstance):
        self.inst = inst
        P, n, K = len(inst.profiles), inst.n, len(inst.slots)
        self.shape = (P, n, K)
        pi, s, w = inst.profile_prob, inst.slots.array, inst.w
        base = pi[:, None, None] * w[None, :, None] * s[None, None, :]
        phi = inst.gather([b.phi for b in inst.bidders])
        v = inst.gather([b.v for b in inst.bidders])
        self.metric = {
            "revenue": (base * phi[:, :, None]).ravel(),
            "welfare": (base * v[:, :, None]).ravel(),
            "clicks": base.ravel(),
            "impressions": np.broadcast_to(pi[:, None, None], (P, n, K)).ravel().copy(),
        }
        self.A_ub, self.b_ub = self._polytope(base)

    def _polytope(self, base):
        P, n, K = self.shape
        idx = np.arange(P * n * K).reshape(P, n, K)
        rows, cols, vals = [], [], []
        r = 0
        # each bidder takes at most one slot, each slot holds at most one bidder
        for group in list(idx.reshape(P * n, K)) + list(idx.transpose(0, 2, 1).reshape(P * K, n)):
            rows += [r] * group.size
            cols += group.tolist()
            vals += [1.0] * group.size
            r += 1
        # interim monotonicity x_i(l) <= x_i(l + 1)
        prof = self.inst.profiles
        for i, b in enumerate(self.inst.bidders):
            q = b.q
            for l in range(len(q) - 1):
                for sign, lev in ((1.0, l), (-1.0, l + 1)):
                    ps = np.nonzero(prof[:, i] == lev)[0]
                    rows += [r] * (ps.size * K)
                    cols += idx[ps, i, :].ravel().tolist()
                    vals += (sign * base[ps, i, :] / q[lev]).ravel().tolist()
                r += 1
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, P * n * K))
        b = np.zeros(r)
        b[: P * n + P * K] = 1.0
        return A, b

    def objective(self, weights) -> np.ndarray:
        a, b, g = _triple(weights)
        m = self.metric
        return a * m["revenue"] + b * m["welfare"] + g * m["clicks"]

    def metrics(self, y: np.ndarray) -> MetricsRecord:
        return MetricsRecord(*(float(np.dot(self.metric[k], y)) for k in MetricsRecord.FIELDS))

    def solve(self, weights, constraints: Sequence[LinearConstraint] = ()):
        """``linprog`` maximising the weighted objective; returns the raw result."""
        A_ub, b_ub = [self.A_ub], [self.b_ub]
        A_eq, b_eq = [], []
        for c in constraints:
            row = self.objective(c.weights)[None, :]
            if c.sense == GE:
                A_ub.append(sparse.csr_matrix(-row))
                b_ub.append([-c.theta])
            else:
                A_eq.append(sparse.csr_matrix(row))
                b_eq.append([c.theta])
        kw = {}
        if A_eq:
            kw = {"A_eq": sparse.vstack(A_eq), "b_eq": np.concatenate(b_eq)}
        return optimize.linprog(-self.objective(weights), A_ub=sparse.vstack(A_ub),
                                b_ub=np.concatenate(b_ub), bounds=(0, None), method="highs", **kw)


def _shifted(weights0, constraints, lam) -> np.ndarray:
    t = np.array(_triple(weights0), float)
    for c, l in zip(constraints, lam):
        t = t + l * np.array(c.weights)
    return t


def unconstrained_optimum(inst: DiscreteInstance, weights, program: _Program | None = None) -> float:
    """``max OBJ`` over monotone allocations, by ``psi``-ranking when it is monotone."""
    a, b, g = _triple(weights)
    monotone = all(np.all(np.diff(bd.psi((a, b, g))) >= -1e-12) for bd in inst.bidders)
    if monotone:
        psi = inst.gather([bd.psi((a, b, g)) for bd in inst.bidders])
        contrib = inst.w * psi
        # rank by w psi; only positive contributions are worth a slot
        ranked = -np.sort(-np.where(contrib > 0, contrib, 0.0), axis=1)
        K = len(inst.slots)
        m = min(K, inst.n)
        per_profile = (ranked[:, :m] * inst.slots.array[None, :m]).sum(axis=1)
        return float(np.dot(inst.profile_prob, per_profile))
    program = program or _Program(inst)
    res = program.solve((a, b, g))
    if res.status != 0:
        raise InfeasibleError(res.message)
    return float(-res.fun)


@dataclass(frozen=True)
class DualityResult:
    primal: float
    dual: float
    gap: float
    lam: tuple[float, ...]
    status: str
    slater_margin: float
    primal_metrics: MetricsRecord | None = None
    evaluations: int = 0


def dual_function(inst: DiscreteInstance, weights0, constraints, lam, program=None) -> float:
    t = _shifted(weights0, constraints, lam)
    return unconstrained_optimum(inst, t, program) - float(
        sum(l * c.theta for l, c in zip(lam, constraints)))


def slater_margin(program: _Program, constraints: Sequence[LinearConstraint]) -> float:
    """Largest uniform slack attainable in the inequality constraints.

    Equality constraints count as strictly feasible when ``theta`` lies strictly
    inside the range their measure takes over the feasible allocations.
    """
    if not constraints:
        return np.inf
    margin = np.inf
    for c in constraints:
        if c.sense == EQ:
            hi = -program.solve(c.weights).fun
            lo = program.solve(tuple(-x for x in c.weights)).fun
            margin = min(margin, c.theta - lo, hi - c.theta)
    ge = [c for c in constraints if c.sense == GE]
    if ge:
        N = program.A_ub.shape[1]
        # variables (y, s): maximise s subject to OBJ_k(y) - theta_k >= s
        A = [sparse.hstack([program.A_ub, sparse.csr_matrix((program.A_ub.shape[0], 1))])]
        b = [program.b_ub]
        for c in ge:
            row = np.append(-program.objective(c.weights), 1.0)
            A.append(sparse.csr_matrix(row[None, :]))
            b.append([-c.theta])
        cost = np.zeros(N + 1)
        cost[-1] = -1.0
        bounds = [(0, None)] * N + [(None, 1.0)]
        res = optimize.linprog(cost, A_ub=sparse.vstack(A), b_ub=np.concatenate(b),
                               bounds=bounds, method="highs")
        margin = min(margin, -res.fun if res.status == 0 else -np.inf)
    return float(margin)


def _grid_points(constraints, lambda_grid) -> np.ndarray:
    g = np.asarray(lambda_grid, float)
    m = len(constraints)
    if m == 0:
        return np.zeros((1, 0))
    if g.ndim == 2:
        pts = g
    else:
        axes = [g if c.sense == EQ else g[g >= 0] for c in constraints]
        pts = np.array(list(itertools.product(*axes)), float).reshape(-1, m)
    keep = np.all([(pts[:, k] >= 0) | (c.sense == EQ) for k, c in enumerate(constraints)], axis=0)
    return pts[keep]


def duality_gap_check(inst: DiscreteInstance, weights0, constraints: Sequence[LinearConstraint],
                      lambda_grid=np.linspace(0.0, 4.0, 41), refine: bool = True,
                      boundary_tol: float = 1e-9) -> DualityResult:
    """Primal optimum, best dual bound over the grid (optionally refined) and their gap.

    Refinement runs bounded coordinate searches from the best grid point and
    also evaluates the dual at the LP's own multipliers; every candidate is a
    valid upper bound, so the reported dual can only tighten.
    """
    constraints = list(constraints)
    program = _Program(inst)
    res = program.solve(weights0, constraints)
    if res.status == 2:
        return DualityResult(np.nan, -np.inf, np.nan, (), "infeasible", -np.inf)
    if res.status != 0:
        raise InfeasibleError(f"primal LP failed: {res.message}")
    primal = float(-res.fun)
    primal_metrics = program.metrics(res.x)
    margin = slater_margin(program, constraints)
    m = len(constraints)
    calls = 0

    def h(lam):
        nonlocal calls
        calls += 1
        return dual_function(inst, weights0, constraints, lam, program)

    pts = _grid_points(constraints, lambda_grid)
    vals = np.array([h(p) for p in pts])
    best = int(np.argmin(vals))
    lam, dual = pts[best].copy(), float(vals[best])
    if refine and m:
        cands = [_lp_multipliers(res, constraints)]
        step = float(np.ptp(np.asarray(lambda_grid, float))) / max(len(np.ravel(lambda_grid)) - 1, 1) or 1.0
        cur = lam.copy()
        for _ in range(12):
            at_edge = False
            for k, c in enumerate(constraints):
                lo = cur[k] - step if c.sense == EQ else max(0.0, cur[k] - step)
                hi = cur[k] + step

                def f(x, k=k):
                    trial = cur.copy()
                    trial[k] = x
                    return h(trial)

                r = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                             options={"xatol": 1e-12})
                if r.fun < f(cur[k]):
                    cur[k] = r.x
                    # the minimiser sits on the bracket edge: the optimum may lie beyond it
                    at_edge |= min(r.x - lo, hi - r.x) < 1e-3 * step and r.x > 0
            step = 2.0 * step if at_edge else 0.5 * step
        cands.append(cur)
        for cand in cands:
            v = h(cand)
            if v < dual:
                lam, dual = np.asarray(cand, float), v
    status = "optimal" if margin > boundary_tol else "boundary"
    return DualityResult(primal, dual, dual - primal, tuple(float(x) for x in lam), status,
                         margin, primal_metrics, calls)


def _lp_multipliers(res, constraints):
    """Lagrange multipliers of the objective constraints read off the LP duals."""
    ge = iter(res.ineqlin.marginals[-sum(c.sense == GE for c in constraints):]
              if any(c.sense == GE for c in constraints) else [])
    eq = iter(res.eqlin.marginals if any(c.sense == EQ for c in constraints) else [])
    out = []
    for c in constraints:
        out.append(max(0.0, -float(next(ge))) if c.sense == GE else float(next(eq)))
    return np.array(out)
