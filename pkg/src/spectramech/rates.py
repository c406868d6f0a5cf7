"""Expected throughput models for the two sharing modes.

Frequency-division users get an exclusive bandwidth slice x and see no
interference; their expected rate is

    psi(x) = E_h[ x * log(1 + h * P / (N0 * x)) ]

with the expectation over the channel-gain distribution.  Spectrum-sharing
users transmit over the whole band simultaneously and are limited by mutual
interference:

    rate_i(p) = W * log(1 + G[i,i] * p_i / (N0 * W + sum_{j != i} G[j,i] * p_j))

All logarithms are natural, so rates are in nats per second.  psi extends
continuously to psi(0) = 0, is strictly increasing and strictly concave,
and its one-sided derivative at 0 diverges, which is why
:func:`expected_rate_derivative` returns a sentinel there instead of a float.

Continuous gain distributions are integrated with a fixed-order
Gauss-Legendre rule so that every evaluation of the same distribution is
bitwise reproducible.  Unbounded gain laws must be truncated by the caller
before being handed in.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DomainError, NumericsError, ValidationError

__all__ = [
    "GAUSS_LEGENDRE_ORDER",
    "UNBOUNDED_DERIVATIVE",
    "GainDistribution",
    "FdUserPhysical",
    "SsPhysical",
    "expected_rate",
    "expected_rate_derivative",
    "expected_rate_second_derivative",
    "interference_rate",
    "interference_rates",
    "interference_rate_gradient",
]

GAUSS_LEGENDRE_ORDER = 64  # fixed quadrature order; part of the numeric contract
_DISCRETE_MASS_TOL = 1e-12  # discrete probabilities must sum to 1 this tightly
_DENSITY_MASS_TOL = 1e-6  # quadrature mass of a continuous density vs 1


class _UnboundedDerivative:
    """Singleton marker for a one-sided derivative that diverges to +inf."""

    __slots__ = ()

    def __repr__(self):  # pragma: no cover - cosmetic
        return "UNBOUNDED_DERIVATIVE"


UNBOUNDED_DERIVATIVE = _UnboundedDerivative()


def _as_1d_positive(values, what):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError(f"{what}: need at least one value")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what}: values must be finite")
    if np.any(arr <= 0.0):
        raise DomainError(f"{what}: values must be strictly positive")
    return arr


@dataclass(frozen=True, eq=False)
class GainDistribution:
    """Channel-gain law reduced to evaluation nodes with nonnegative masses.

    ``points`` holds gain values h_k > 0 and ``weights`` the matching masses:
    exact probabilities for the deterministic and discrete kinds, and
    Gauss-Legendre quadrature masses (rule weight times density value times
    half-width) for the continuous kind.  Every expectation in this module
    is the dot product against ``weights``, which makes the three kinds
    share one code path.
    """

    kind: str
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def deterministic(cls, gain: float) -> "GainDistribution":
        pts = _as_1d_positive([gain], "gain")
        return cls("deterministic", pts, np.ones(1))

    @classmethod
    def discrete(cls, gains, probabilities) -> "GainDistribution":
        pts = _as_1d_positive(gains, "gains")
        probs = np.asarray(probabilities, dtype=float).reshape(-1)
        if probs.shape != pts.shape:
            raise DomainError("gains and probabilities must have equal length")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise DomainError("probabilities must be finite and nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > _DISCRETE_MASS_TOL:
            raise ValidationError(
                f"discrete gain probabilities sum to {total!r}, not 1",
                [f"probability mass off by {total - 1.0:.3e}"],
            )
        return cls("discrete", pts, probs)

    @classmethod
    def continuous(
        cls,
        lo: float,
        hi: float,
        density: Callable[[np.ndarray], np.ndarray],
        order: int = GAUSS_LEGENDRE_ORDER,
    ) -> "GainDistribution":
        """Truncated continuous law with density ``density`` on [lo, hi].

        The density is sampled once at the Gauss-Legendre nodes of the given
        order; those samples define the distribution from then on.  A law
        with unbounded support has to be truncated (and renormalized) by the
        caller, and the discarded mass should be documented next to the
        scenario that uses it.
        """
        if not (np.isfinite(lo) and np.isfinite(hi)) or not 0.0 < lo < hi:
            raise DomainError("continuous gain support needs 0 < lo < hi, both finite")
        if order < 1:
            raise DomainError("quadrature order must be at least 1")
        nodes, wts = np.polynomial.legendre.leggauss(int(order))
        half = 0.5 * (hi - lo)
        pts = 0.5 * (hi + lo) + half * nodes
        dens = np.asarray(density(pts), dtype=float).reshape(-1)
        if dens.shape != pts.shape or not np.all(np.isfinite(dens)):
            bad = None
            if dens.shape == pts.shape:
                idx = int(np.argmax(~np.isfinite(dens)))
                bad = {"node": float(pts[idx]), "density": float(dens[idx])}
            raise NumericsError("density evaluation failed at quadrature nodes", bad)
        if np.any(dens < 0.0):
            idx = int(np.argmax(dens < 0.0))
            raise DomainError(
                f"density is negative at h={pts[idx]!r}: {dens[idx]!r}"
            )
        masses = wts * dens * half
        total = float(masses.sum())
        if abs(total - 1.0) > _DENSITY_MASS_TOL:
            raise ValidationError(
                f"continuous gain density integrates to {total!r}, not 1",
                [f"quadrature mass off by {total - 1.0:.3e}"],
            )
        return cls("continuous", pts, masses)

    @property
    def mean(self) -> float:
        return float(self.points @ self.weights)


@dataclass(frozen=True, eq=False)
class FdUserPhysical:
    """Physical layer of one frequency-division user.

    ``power`` is the user's transmit power over whatever slice it is
    granted and ``noise_density`` the one-sided noise spectral density at
    its receiver.  Both are per user; nothing forces users to share them.
    """

    gain: GainDistribution
    power: float
    noise_density: float

    def __post_init__(self):
        if not (np.isfinite(self.power) and self.power > 0.0):
            raise DomainError("transmit power must be finite and positive")
        if not (np.isfinite(self.noise_density) and self.noise_density > 0.0):
            raise DomainError("noise density must be finite and positive")

    @cached_property
    def snr_points(self) -> np.ndarray:
        # c_k = h_k * P / N0; the rate depends on the gain law only through these
        return self.gain.points * (self.power / self.noise_density)

    @cached_property
    def snr_weights(self) -> np.ndarray:
        return self.gain.weights


def _check_bandwidth(x) -> float:
    x = float(x)
    if not np.isfinite(x) or x < 0.0:
        raise DomainError(f"bandwidth must be finite and nonnegative, got {x!r}")
    return x


def expected_rate(user: FdUserPhysical, bandwidth) -> float:
    """Expected rate psi(x) of an FD user granted ``bandwidth`` of spectrum.

    psi(0) = 0 by continuity.  Raises :class:`DomainError` for negative
    bandwidth; the resource-budget upper bound is a scenario-level concern
    and is not enforced here.
    """
    x = _check_bandwidth(bandwidth)
    if x == 0.0:
        return 0.0
    c = user.snr_points
    val = float(user.snr_weights @ (x * np.log1p(c / x)))
    if not np.isfinite(val):
        raise NumericsError(
            "expected rate evaluated to a non-finite value",
            {"bandwidth": x, "max_snr_point": float(c.max())},
        )
    return val


def expected_rate_derivative(user: FdUserPhysical, bandwidth):
    """Marginal rate psi'(x); returns ``UNBOUNDED_DERIVATIVE`` at x = 0.

    psi'(x) = E[ log(1 + c/x) - c / (x + c) ] with c = h P / N0, which is
    strictly positive and strictly decreasing, and diverges as x -> 0+.
    """
    x = _check_bandwidth(bandwidth)
    if x == 0.0:
        return UNBOUNDED_DERIVATIVE
    c = user.snr_points
    val = float(user.snr_weights @ (np.log1p(c / x) - c / (x + c)))
    if not np.isfinite(val):
        raise NumericsError(
            "expected rate derivative evaluated to a non-finite value",
            {"bandwidth": x, "max_snr_point": float(c.max())},
        )
    return val


def expected_rate_second_derivative(user: FdUserPhysical, bandwidth) -> float:
    """psi''(x) = -E[ c^2 / ((c + x)^2 x) ] < 0; psi is strictly concave."""
    x = _check_bandwidth(bandwidth)
    if x == 0.0:
        raise DomainError("the second derivative is unbounded at zero bandwidth")
    c = user.snr_points
    return float(user.snr_weights @ (-(c * c) / ((c + x) ** 2 * x)))


@dataclass(frozen=True, eq=False)
class SsPhysical:
    """Physical layer of the spectrum-sharing mode.

    ``gain_matrix[i, j]`` is the (deterministic) link gain from transmitter
    i to receiver j, so the diagonal carries the useful links and the
    off-diagonal entries the interference couplings.
    """

    gain_matrix: np.ndarray
    bandwidth: float
    noise_density: float

    def __post_init__(self):
        g = np.asarray(self.gain_matrix, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise DomainError("gain matrix must be square and non-empty")
        if not np.all(np.isfinite(g)) or np.any(g <= 0.0):
            raise DomainError("gain matrix entries must be finite and positive")
        object.__setattr__(self, "gain_matrix", g)
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0.0):
            raise DomainError("shared bandwidth must be finite and positive")
        if not (np.isfinite(self.noise_density) and self.noise_density > 0.0):
            raise DomainError("noise density must be finite and positive")

    @property
    def n_users(self) -> int:
        return self.gain_matrix.shape[0]

    @property
    def noise_power(self) -> float:
        # N0 * W, the thermal noise power over the shared band
        return self.noise_density * self.bandwidth


def _check_powers(phys: SsPhysical, powers) -> np.ndarray:
    p = np.asarray(powers, dtype=float).reshape(-1)
    if p.shape != (phys.n_users,):
        raise DomainError(
            f"expected {phys.n_users} powers, got shape {np.shape(powers)}"
        )
    if not np.all(np.isfinite(p)) or np.any(p < 0.0):
        raise DomainError("powers must be finite and nonnegative")
    return p


def interference_rates(phys: SsPhysical, powers) -> np.ndarray:
    """Rates of all users under the power vector, as an array."""
    p = _check_powers(phys, powers)
    g = phys.gain_matrix
    received = p @ g  # received[j] = sum_i G[i, j] * p_i
    own = np.diag(g) * p
    interference = received - own
    return phys.bandwidth * np.log1p(own / (phys.noise_power + interference))


def interference_rate(phys: SsPhysical, powers, user: int) -> float:
    """Rate of one user when everyone transmits with the given powers."""
    if not 0 <= user < phys.n_users:
        raise DomainError(f"user index {user} out of range")
    return float(interference_rates(phys, powers)[user])


def interference_rate_gradient(phys: SsPhysical, powers, user: int) -> np.ndarray:
    """Gradient of ``interference_rate(phys, . , user)`` at ``powers``.

    The own-power component is positive; every cross component is
    nonpositive (more interference never helps) and vanishes when the user
    has no transmit power of its own.
    """
    if not 0 <= user < phys.n_users:
        raise DomainError(f"user index {user} out of range")
    p = _check_powers(phys, powers)
    g = phys.gain_matrix
    i = user
    own = g[i, i] * p[i]
    den = phys.noise_power + float(p @ g[:, i]) - own  # noise plus interference
    grad = np.empty(phys.n_users)
    # d/dp_j of W*(log(den + own) - log(den)) for j != i; d/dp_i has den fixed
    grad_cross = -phys.bandwidth * g[:, i] * own / (den * (den + own))
    grad[:] = grad_cross
    grad[i] = phys.bandwidth * g[i, i] / (den + own)
    return grad
