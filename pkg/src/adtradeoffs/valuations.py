"""Value distributions, virtual values and combined score functions.

A bidder's type is a per-click value drawn from a distribution with compact
support ``[c, d]``.  The combined score of a type ``z`` under objective weights
``(alpha, beta, gamma)`` is

    psi(z) = alpha * phi(z) + beta * z + gamma,   phi(z) = z - (1 - F(z)) / f(z)

and ranking ads by ``w * psi(b)`` maximises ``alpha*revenue + beta*welfare +
gamma*clicks`` in expectation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, RegularityError, SingularityError

DEFAULT_GRID = 1024
DEFAULT_TOL = 1e-10
_SUPPORT_SLACK = 1e-12


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of revenue, welfare and click yield in the objective."""

    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"objective weights must be finite and >= 0, got {vals}")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


WELFARE = ObjectiveWeights(0.0, 1.0, 0.0)
REVENUE = ObjectiveWeights(1.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class ValueDistribution:
    """A per-click value distribution on a compact interval.

    Use the constructors :meth:`uniform`, :meth:`lognormal`, :meth:`beta` and
    :meth:`empirical` rather than building instances directly.  Lognormal and
    empirical laws are truncated to their support and renormalised, so
    ``F(c) = 0`` and ``F(d) = 1`` for every kind.
    """

    kind: str
    params: tuple
    support: tuple[float, float]
    _mass: tuple[float, float] = field(default=(0.0, 1.0), repr=False)
    _sample: np.ndarray | None = field(default=None, repr=False)
    _bandwidth: float = field(default=0.0, repr=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ValueDistribution":
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"uniform requires lo < hi, got ({lo}, {hi})")
        return cls("uniform", (float(lo), float(hi)), (float(lo), float(hi)))

    @classmethod
    def lognormal(cls, mu: float, sigma: float, q_lo: float = 0.001,
                  q_hi: float = 0.999) -> "ValueDistribution":
        if not sigma > 0:
            raise ValueError("lognormal sigma must be positive")
        if not 0.0 <= q_lo < q_hi <= 1.0 or q_hi == 1.0:
            raise ValueError("lognormal truncation needs 0 <= q_lo < q_hi < 1")
        law = stats.lognorm(s=sigma, scale=np.exp(mu))
        c, d = float(law.ppf(q_lo)), float(law.ppf(q_hi))
        return cls("lognormal", (float(mu), float(sigma)), (c, d), (q_lo, q_hi))

    @classmethod
    def beta(cls, a: float, b: float) -> "ValueDistribution":
        if not (a > 0 and b > 0):
            raise ValueError("beta parameters must be positive")
        return cls("beta", (float(a), float(b)), (0.0, 1.0))

    @classmethod
    def empirical(cls, sample: Sequence[float]) -> "ValueDistribution":
        xs = np.sort(np.asarray(sample, dtype=float))
        if xs.size == 0:
            raise ValueError("empirical sample must be non-empty")
        if not np.all(np.isfinite(xs)) or np.any(xs < 0):
            raise ValueError("empirical sample values must be finite and >= 0")
        h = silverman_bandwidth(xs)
        c = max(0.0, float(xs[0] - 3 * h))
        d = float(xs[-1] + 3 * h)
        raw = _kde_cdf(np.array([c, d]), xs, h)
        return cls("empirical", tuple(xs.tolist()), (c, d), (float(raw[0]), float(raw[1])),
                   xs, h)

    # -- evaluation -------------------------------------------------------
    def _raw_cdf_pdf(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "uniform":
            lo, hi = self.params
            return (z - lo) / (hi - lo), np.full_like(z, 1.0 / (hi - lo))
        if self.kind == "lognormal":
            mu, sigma = self.params
            zz = np.maximum(z, 1e-300)
            u = (np.log(zz) - mu) / sigma
            cdf = special.ndtr(u)
            pdf = np.exp(-0.5 * u * u) / (zz * sigma * np.sqrt(2 * np.pi))
            return cdf, pdf
        if self.kind == "beta":
            a, b = self.params
            return special.betainc(a, b, z), stats.beta.pdf(z, a, b)
        xs, h = self._sample, self._bandwidth
        return _kde_cdf(z, xs, h), _kde_pdf(z, xs, h)

    def _check(self, z: np.ndarray) -> None:
        c, d = self.support
        if np.any(z < c - _SUPPORT_SLACK) or np.any(z > d + _SUPPORT_SLACK) or np.any(np.isnan(z)):
            raise DomainError(f"value outside support [{c}, {d}]")

    def cdf_pdf(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised ``(F, f)`` of the (truncated) law; raises outside support."""
        z = np.asarray(z, dtype=float)
        self._check(z)
        c, d = self.support
        z = np.clip(z, c, d)
        cdf, pdf = self._raw_cdf_pdf(z)
        if self.kind == "uniform" or self.kind == "beta":
            return np.clip(cdf, 0.0, 1.0), pdf
        lo, hi = self._mass
        span = hi - lo
        return np.clip((cdf - lo) / span, 0.0, 1.0), pdf / span

    def ppf(self, u) -> np.ndarray:
        """Quantile function of the truncated law."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        c, d = self.support
        if self.kind == "uniform":
            return c + u * (d - c)
        if self.kind == "beta":
            return stats.beta.ppf(u, *self.params)
        if self.kind == "lognormal":
            mu, sigma = self.params
            lo, hi = self._mass
            return np.clip(np.exp(mu + sigma * special.ndtri(lo + u * (hi - lo))), c, d)
        grid = np.linspace(c, d, 4097)
        cdf, _ = self.cdf_pdf(grid)
        cdf = np.maximum.accumulate(cdf)
        return np.interp(u, cdf, grid)

    def mean(self) -> float:
        c, d = self.support
        grid = np.linspace(c, d, 8193)
        cdf, _ = self.cdf_pdf(grid)
        # E[X] = c + integral of the survival function
        return float(c + integrate.trapezoid(1.0 - cdf, grid))

    def __repr__(self) -> str:
        if self.kind == "empirical":
            return f"ValueDistribution(empirical, n={len(self.params)})"
        return f"ValueDistribution({self.kind}{self.params})"


@dataclass(frozen=True)
class LinearVirtual:
    """Least-squares line standing in for a virtual value function."""

    slope: float
    intercept: float
    fit_error: float = 0.0
    support: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.slope > 0:
            raise RegularityError(f"linear virtual value needs positive slope, got {self.slope}")

    def __call__(self, z):
        return self.slope * np.asarray(z, dtype=float) + self.intercept


ValueModel = Union[ValueDistribution, LinearVirtual]


class Reserve(NamedTuple):
    price: float
    clamped: bool


def silverman_bandwidth(xs: np.ndarray) -> float:
    n = xs.size
    if n > 1:
        sd = float(np.std(xs, ddof=1))
        q75, q25 = np.percentile(xs, [75, 25])
        spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    else:
        spread = 0.0
    if spread <= 0:
        spread = max(abs(float(xs[0])), 1.0) * 1e-2
    return 0.9 * spread * n ** (-0.2)


def _kde_cdf(z, xs, h):
    z = np.asarray(z, dtype=float)
    return special.ndtr((z[..., None] - xs) / h).mean(axis=-1)


def _kde_pdf(z, xs, h):
    z = np.asarray(z, dtype=float)
    u = (z[..., None] - xs) / h
    return (np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)).mean(axis=-1) / h


def density_cdf(dist: ValueDistribution, z: float) -> tuple[float, float]:
    """Return ``(f(z), F(z))``."""
    cdf, pdf = dist.cdf_pdf(z)
    return float(pdf), float(cdf)


def virtual_values(dist: ValueDistribution, z) -> np.ndarray:
    """Vectorised virtual value; raises :class:`SingularityError` where f = 0."""
    z = np.asarray(z, dtype=float)
    cdf, pdf = dist.cdf_pdf(z)
    if np.any(pdf <= 0):
        raise SingularityError("density vanishes; virtual value undefined")
    return z - (1.0 - cdf) / pdf


def virtual_value(dist: ValueDistribution, z: float) -> float:
    return float(virtual_values(dist, z))


def psi_values(weights: ObjectiveWeights, model: ValueModel | None, z) -> np.ndarray:
    """Vectorised combined score ``alpha*phi(z) + beta*z + gamma``."""
    z = np.asarray(z, dtype=float)
    out = weights.beta * z + weights.gamma
    if weights.alpha == 0:
        return out
    if model is None:
        raise ValueError("a value model is required when alpha > 0")
    phi = model(z) if isinstance(model, LinearVirtual) else virtual_values(model, z)
    return weights.alpha * phi + out


def psi(weights: ObjectiveWeights, dist: ValueModel | None, z: float) -> float:
    return float(psi_values(weights, dist, z))


def psi_linear_coefficients(weights: ObjectiveWeights, model: ValueModel | None):
    """``(A, B)`` with ``psi(z) = A z + B`` when psi is affine, else ``None``."""
    if weights.alpha == 0:
        return weights.beta, weights.gamma
    if isinstance(model, LinearVirtual):
        return (weights.alpha * model.slope + weights.beta,
                weights.alpha * model.intercept + weights.gamma)
    if isinstance(model, ValueDistribution) and model.kind == "uniform":
        lo, hi = model.params
        # phi(z) = 2z - hi exactly on a uniform law
        return 2 * weights.alpha + weights.beta, -weights.alpha * hi + weights.gamma
    return None


def _support_of(model: ValueModel | None) -> tuple[float, float] | None:
    if isinstance(model, ValueDistribution):
        return model.support
    if isinstance(model, LinearVirtual):
        return model.support
    return None


def psi_inverse_zero(weights: ObjectiveWeights, dist: ValueModel | None,
                     tol: float = DEFAULT_TOL, grid_size: int = DEFAULT_GRID) -> Reserve:
    """Reserve ``r = psi^{-1}(0)``, clamped to the support when psi keeps one sign."""
    support = _support_of(dist)
    coef = psi_linear_coefficients(weights, dist)
    if support is None:
        if coef is None or coef[0] <= 0:
            raise DomainError("a support is needed to locate the reserve")
        return Reserve(max(0.0, -coef[1] / coef[0]), -coef[1] / coef[0] < 0)
    c, d = support
    if coef is None:
        probe = np.linspace(c, d, grid_size)
        with np.errstate(all="ignore"):
            f = dist.cdf_pdf(probe)[1]
        probe = probe[f > 0]
        vals = psi_values(weights, dist, probe)
        if np.any(np.diff(vals) < -1e-9):
            raise RegularityError("psi is not monotone on the support; use linear_fit_virtual")
        lo_val, hi_val = vals[0], vals[-1]
        c, d = float(probe[0]), float(probe[-1])
        fn = lambda z: psi(weights, dist, z)
    else:
        a, b = coef
        fn = lambda z: a * z + b
        lo_val, hi_val = fn(c), fn(d)
    if lo_val >= 0:
        return Reserve(c, True)
    if hi_val < 0:
        return Reserve(d, True)
    lo, hi = c, d
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return Reserve(0.5 * (lo + hi), False)


def _probe_phi(dist: ValueDistribution, grid_size: int):
    c, d = dist.support
    z = np.linspace(c, d, grid_size)
    cdf, pdf = dist.cdf_pdf(z)
    ok = pdf > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = z - (1.0 - cdf) / pdf
    ok &= np.isfinite(phi)
    return z, phi, ok


def linear_fit_virtual(dist: ValueDistribution, grid_size: int = DEFAULT_GRID) -> LinearVirtual:
    """Least-squares line through the virtual value on an equispaced support grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    z, phi, ok = _probe_phi(dist, grid_size)
    if ok.sum() * 2 < grid_size or ok.sum() < 2:
        raise SingularityError("virtual value singular on more than half the grid")
    z, phi = z[ok], phi[ok]
    slope, intercept = np.polyfit(z, phi, 1)
    err = float(np.max(np.abs(slope * z + intercept - phi)))
    return LinearVirtual(float(slope), float(intercept), err, dist.support)


def regularity_check(dist: ValueDistribution, grid_size: int = DEFAULT_GRID) -> bool:
    """True iff the virtual value is non-decreasing on the probe grid (tolerance 1e-9)."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    _, phi, ok = _probe_phi(dist, grid_size)
    phi = phi[ok]
    return bool(np.all(np.diff(phi) >= -1e-9))
