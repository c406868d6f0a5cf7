"""Private-valuation distributions, virtual types, and regularity checks.

A user's willingness to pay per unit of expected rate is a scalar type
theta drawn from a known distribution on a bounded interval.  The seller
optimizes against the virtual type

    w(theta) = theta - (1 - F(theta)) / f(theta)

and everything downstream assumes w is increasing (the usual regularity
condition; any distribution with a non-decreasing density satisfies it).
:func:`certify_regularity` checks that assumption on a dense grid and
reports a witness pair when it fails, so a mechanism can refuse to run on
an uncertified profile instead of silently optimizing the wrong thing.

Three families are supported: uniform, truncated parametric densities
(power-law and linear, renormalized to the support), and tabulated
distributions given by a piecewise-linear CDF.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "DEFAULT_REGULARITY_GRID",
    "TypeDistribution",
    "UniformType",
    "TruncatedPowerType",
    "TruncatedLinearType",
    "TabulatedType",
    "RegularityResult",
    "VirtualTypeProfile",
    "virtual_type",
    "certify_regularity",
    "sample_types",
]

DEFAULT_REGULARITY_GRID = 1024  # grid resolution used to certify regularity
_CDF_ENDPOINT_TOL = 1e-9  # |F(lo)| and |F(hi)-1| allowed
_PDF_CONSISTENCY_TOL = 1e-6  # relative mismatch allowed between F' and f


def _check_support(lo, hi):
    lo, hi = float(lo), float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise DomainError("type support bounds must be finite")
    if lo < 0.0 or not lo < hi:
        raise DomainError(f"type support needs 0 <= lo < hi, got [{lo!r}, {hi!r}]")
    return lo, hi


class TypeDistribution:
    """Base class; subclasses fill in pdf/cdf/ppf over [lo, hi].

    All three methods accept scalars or arrays and are vectorized.  ppf is
    the exact inverse of cdf, which is what makes seeded inverse-transform
    sampling reproducible down to the bit.
    """

    kind = "abstract"

    def __init__(self, lo, hi):
        self.lo, self.hi = _check_support(lo, hi)

    def pdf(self, theta):
        raise NotImplementedError

    def cdf(self, theta):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def _clip_check(self, theta):
        th = np.asarray(theta, dtype=float)
        if np.any(th < self.lo) or np.any(th > self.hi):
            raise DomainError(
                f"type value outside support [{self.lo!r}, {self.hi!r}]"
            )
        return th

    def self_check(self, grid_points: int = 257) -> list:
        """Numeric consistency checks, returned as a list of failures.

        Verifies a positive density on the support, CDF endpoint values,
        and agreement between the CDF's finite-difference slope and the
        density away from tabulation knots.
        """
        failures = []
        if abs(float(self.cdf(self.lo))) > _CDF_ENDPOINT_TOL:
            failures.append(f"cdf({self.lo!r}) = {float(self.cdf(self.lo))!r} != 0")
        if abs(float(self.cdf(self.hi)) - 1.0) > _CDF_ENDPOINT_TOL:
            failures.append(f"cdf({self.hi!r}) = {float(self.cdf(self.hi))!r} != 1")
        grid = np.linspace(self.lo, self.hi, grid_points)
        dens = np.asarray(self.pdf(grid), dtype=float)
        if not np.all(np.isfinite(dens)):
            failures.append("density is non-finite somewhere on the support")
        elif np.any(dens <= 0.0):
            idx = int(np.argmax(dens <= 0.0))
            failures.append(f"density not strictly positive at theta={grid[idx]!r}")
        # compare F' with f at offset points, keeping clear of any knots
        span = self.hi - self.lo
        h = 1e-6 * span
        mids = 0.5 * (grid[:-1] + grid[1:])
        slopes = (self.cdf(mids + h) - self.cdf(mids - h)) / (2.0 * h)
        ref = np.asarray(self.pdf(mids), dtype=float)
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        err = float(np.max(np.abs(slopes - ref))) / scale
        if err > _PDF_CONSISTENCY_TOL:
            failures.append(
                f"cdf slope disagrees with density (relative error {err:.3e})"
            )
        return failures

    def spec_dict(self) -> dict:
        raise NotImplementedError


class UniformType(TypeDistribution):
    kind = "uniform"

    def pdf(self, theta):
        th = self._clip_check(theta)
        return np.full_like(th, 1.0 / (self.hi - self.lo))

    def cdf(self, theta):
        th = self._clip_check(theta)
        return (th - self.lo) / (self.hi - self.lo)

    def ppf(self, u):
        q = np.asarray(u, dtype=float)
        return self.lo + q * (self.hi - self.lo)

    def spec_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


class TruncatedPowerType(TypeDistribution):
    """Density proportional to theta**exponent, renormalized to [lo, hi].

    Covers decreasing laws such as exponent = -2 as well as increasing
    ones; lo must be positive whenever the exponent is nonzero so the
    density stays positive and finite on the whole support.
    """

    kind = "truncated-parametric"

    def __init__(self, lo, hi, exponent):
        super().__init__(lo, hi)
        self.exponent = float(exponent)
        if not np.isfinite(self.exponent):
            raise DomainError("exponent must be finite")
        if self.exponent != 0.0 and self.lo <= 0.0:
            raise DomainError("power-law types need lo > 0 for a positive density")

    def _antideriv_span(self):
        a = self.exponent + 1.0
        if a == 0.0:
            return np.log(self.hi / self.lo)
        return (self.hi**a - self.lo**a) / a

    def pdf(self, theta):
        th = self._clip_check(theta)
        return th**self.exponent / self._antideriv_span()

    def cdf(self, theta):
        th = self._clip_check(theta)
        a = self.exponent + 1.0
        if a == 0.0:
            return np.log(th / self.lo) / np.log(self.hi / self.lo)
        return (th**a - self.lo**a) / (self.hi**a - self.lo**a)

    def ppf(self, u):
        q = np.asarray(u, dtype=float)
        a = self.exponent + 1.0
        if a == 0.0:
            return self.lo * (self.hi / self.lo) ** q
        return (self.lo**a + q * (self.hi**a - self.lo**a)) ** (1.0 / a)

    def spec_dict(self):
        return {
            "kind": "power",
            "lo": self.lo,
            "hi": self.hi,
            "exponent": self.exponent,
        }


class TruncatedLinearType(TypeDistribution):
    """Linear density with end-to-end ratio f(hi)/f(lo) = ratio > 0."""

    kind = "truncated-parametric"

    def __init__(self, lo, hi, ratio):
        super().__init__(lo, hi)
        self.ratio = float(ratio)
        if not (np.isfinite(self.ratio) and self.ratio > 0.0):
            raise DomainError("density ratio must be finite and positive")

    def _f_lo(self):
        return 2.0 / ((1.0 + self.ratio) * (self.hi - self.lo))

    def pdf(self, theta):
        th = self._clip_check(theta)
        u = (th - self.lo) / (self.hi - self.lo)
        return self._f_lo() * (1.0 + (self.ratio - 1.0) * u)

    def cdf(self, theta):
        th = self._clip_check(theta)
        u = (th - self.lo) / (self.hi - self.lo)
        return self._f_lo() * (self.hi - self.lo) * (u + 0.5 * (self.ratio - 1.0) * u * u)

    def ppf(self, u):
        q = np.asarray(u, dtype=float)
        r = self.ratio
        if r == 1.0:
            frac = q
        else:
            frac = (np.sqrt(1.0 + (r - 1.0) * (1.0 + r) * q) - 1.0) / (r - 1.0)
        return self.lo + frac * (self.hi - self.lo)

    def spec_dict(self):
        return {"kind": "linear", "lo": self.lo, "hi": self.hi, "ratio": self.ratio}


class TabulatedType(TypeDistribution):
    """Distribution given by CDF knots, interpolated piecewise linearly.

    The CDF values must be strictly increasing so the inverse used for
    sampling is well defined; the density is the piecewise-constant slope,
    taken right-continuous at the knots.
    """

    kind = "tabulated"

    def __init__(self, thetas, cdf_values):
        th = np.asarray(thetas, dtype=float).reshape(-1)
        fv = np.asarray(cdf_values, dtype=float).reshape(-1)
        if th.size < 2 or th.shape != fv.shape:
            raise ValidationError(
                "tabulated type needs matching theta and cdf arrays with >= 2 knots"
            )
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(fv))):
            raise ValidationError("tabulated type knots must be finite")
        if np.any(np.diff(th) <= 0.0):
            raise ValidationError("tabulated type thetas must be strictly increasing")
        if np.any(np.diff(fv) <= 0.0):
            raise ValidationError(
                "tabulated type CDF must be strictly increasing (non-invertible otherwise)"
            )
        if abs(fv[0]) > _CDF_ENDPOINT_TOL or abs(fv[-1] - 1.0) > _CDF_ENDPOINT_TOL:
            raise ValidationError(
                f"tabulated CDF must run from 0 to 1, got [{fv[0]!r}, {fv[-1]!r}]"
            )
        super().__init__(th[0], th[-1])
        self.thetas = th
        self.cdf_values = fv
        self._slopes = np.diff(fv) / np.diff(th)

    def pdf(self, theta):
        th = self._clip_check(theta)
        seg = np.clip(
            np.searchsorted(self.thetas, th, side="right") - 1,
            0,
            self._slopes.size - 1,
        )
        return self._slopes[seg]

    def cdf(self, theta):
        th = self._clip_check(theta)
        return np.interp(th, self.thetas, self.cdf_values)

    def ppf(self, u):
        q = np.asarray(u, dtype=float)
        return np.interp(q, self.cdf_values, self.thetas)

    def spec_dict(self):
        return {
            "kind": "tabulated",
            "thetas": [float(v) for v in self.thetas],
            "cdf": [float(v) for v in self.cdf_values],
        }


def virtual_type(dist: TypeDistribution, theta):
    """w(theta) = theta - (1 - F(theta)) / f(theta), vectorized over theta."""
    th = dist._clip_check(theta)
    w = th - (1.0 - np.asarray(dist.cdf(th), dtype=float)) / np.asarray(
        dist.pdf(th), dtype=float
    )
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class RegularityResult:
    """Outcome of the grid check that the virtual type is increasing."""

    certified: bool
    grid_points: int
    witness_types: Optional[Tuple[float, float]] = None
    witness_values: Optional[Tuple[float, float]] = None

    def to_record(self) -> dict:
        return {
            "certified": self.certified,
            "grid_points": self.grid_points,
            "witness_types": list(self.witness_types) if self.witness_types else None,
            "witness_values": (
                list(self.witness_values) if self.witness_values else None
            ),
        }


def certify_regularity(
    dist: TypeDistribution, grid_points: int = DEFAULT_REGULARITY_GRID
) -> RegularityResult:
    """Check that w is strictly increasing on an equispaced grid.

    Returns the first violating consecutive pair as a witness when the
    check fails.  A pass is a certificate at this resolution only; a
    violation is conclusive.
    """
    if grid_points < 2:
        raise DomainError("regularity grid needs at least 2 points")
    grid = np.linspace(dist.lo, dist.hi, int(grid_points))
    w = virtual_type(dist, grid)
    diffs = np.diff(w)
    bad = np.nonzero(diffs <= 0.0)[0]
    if bad.size == 0:
        return RegularityResult(True, int(grid_points))
    k = int(bad[0])
    return RegularityResult(
        False,
        int(grid_points),
        (float(grid[k]), float(grid[k + 1])),
        (float(w[k]), float(w[k + 1])),
    )


@dataclass(frozen=True)
class VirtualTypeProfile:
    """Per-user virtual-type functions plus their regularity certificates."""

    distributions: tuple
    results: tuple
    grid_points: int = DEFAULT_REGULARITY_GRID

    @classmethod
    def build(cls, distributions, grid_points: int = DEFAULT_REGULARITY_GRID):
        dists = tuple(distributions)
        if not dists:
            raise DomainError("need at least one type distribution")
        results = tuple(certify_regularity(d, grid_points) for d in dists)
        return cls(dists, results, int(grid_points))

    @property
    def n_users(self) -> int:
        return len(self.distributions)

    @property
    def all_certified(self) -> bool:
        return all(r.certified for r in self.results)

    def virtual(self, user: int, theta):
        return virtual_type(self.distributions[user], theta)

    def uncertified_users(self) -> list:
        return [i for i, r in enumerate(self.results) if not r.certified]


def sample_types(distributions, count: int, seed) -> np.ndarray:
    """Draw ``count`` i.i.d. type vectors by inverse-transform sampling.

    The draw is a pure function of ``seed``; re-running with the same seed
    reproduces the same matrix bit for bit.
    """
    dists = tuple(distributions)
    if count < 0:
        raise DomainError("sample count must be nonnegative")
    rng = np.random.default_rng(seed)
    u = rng.random((int(count), len(dists)))
    out = np.empty_like(u)
    for j, d in enumerate(dists):
        out[:, j] = d.ppf(u[:, j])
    return out
