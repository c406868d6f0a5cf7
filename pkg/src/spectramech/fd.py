"""Frequency-division mechanism: bandwidth auction with exclusive slices.

Users value bandwidth through their fading-averaged rate and report a
scalar willingness-to-pay per unit rate.  The mechanism maps reports to
virtual types, gives zero bandwidth to users whose virtual type is not
positive, and water-fills the rest so that the virtual-weighted marginal
rates share a common water level.  Taxes follow the usual envelope
construction: a user pays their report times realized rate minus the
integral of the realized rate over lower own-reports, discretized as a
right-endpoint sum whose one-sided error is reported alongside.

Regularity of every user's type distribution is certified on a grid at
scenario construction; operations refuse to run with an uncertified
profile unless the scenario explicitly allows it.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .distributions import (
    DEFAULT_REGULARITY_GRID,
    TypeDistribution,
    VirtualTypeProfile,
)
from .errors import DomainError, SolverError, ValidationError
from .interim import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_TAX_GRID,
    InterimEstimate,
    RevenueEstimate,
    _count_drops,
    interim_estimate,
    revenue_estimate,
)
from .rates import FdUserPhysical

# budget feasibility and stationarity targets for the water-filling solver
BUDGET_RTOL = 1e-9
_INNER_RTOL = 1e-12
_OUTER_CAP = 200
_INNER_CAP = 120

_LEVEL_BISECTIONS = 52


@dataclass(frozen=True, eq=False)
class FdUser:
    """One bidder: physical channel plus the type law their report follows."""

    physical: FdUserPhysical
    types: TypeDistribution

    def __post_init__(self):
        if not isinstance(self.physical, FdUserPhysical):
            raise DomainError("physical must be an FdUserPhysical")
        if not isinstance(self.types, TypeDistribution):
            raise DomainError("types must be a TypeDistribution")


@dataclass(frozen=True, eq=False)
class FdScenario:
    """Everything fixed before reports arrive.

    Construction certifies regularity of each user's type distribution at
    ``regularity_grid`` resolution and freezes the flattened gain-node
    arrays the solver kernels consume.
    """

    bandwidth: float
    users: tuple
    regularity_grid: int = DEFAULT_REGULARITY_GRID
    allow_uncertified: bool = False

    def __post_init__(self):
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise DomainError("bandwidth must be positive and finite")
        if not self.users:
            raise DomainError("scenario needs at least one user")
        object.__setattr__(self, "users", tuple(self.users))
        for u in self.users:
            if not isinstance(u, FdUser):
                raise DomainError("users must be FdUser instances")
        profile = VirtualTypeProfile.build(
            tuple(u.types for u in self.users), grid_points=self.regularity_grid
        )
        object.__setattr__(self, "_profile", profile)
        snr_parts = [np.asarray(u.physical.snr_points, dtype=float) for u in self.users]
        mass_parts = [np.asarray(u.physical.snr_weights, dtype=float) for u in self.users]
        offs = np.zeros(len(self.users) + 1, dtype=np.int64)
        offs[1:] = np.cumsum([p.size for p in snr_parts])
        object.__setattr__(self, "_snr", np.ascontiguousarray(np.concatenate(snr_parts)))
        object.__setattr__(self, "_mass", np.ascontiguousarray(np.concatenate(mass_parts)))
        object.__setattr__(self, "_offs", offs)

    @property
    def n_users(self):
        return len(self.users)

    @property
    def type_dists(self):
        return tuple(u.types for u in self.users)

    @property
    def virtual_profile(self) -> VirtualTypeProfile:
        return self._profile

    @cached_property
    def support_lo(self):
        return np.array([u.types.lo for u in self.users])

    @cached_property
    def support_hi(self):
        return np.array([u.types.hi for u in self.users])

    def validation_report(self):
        """Named check results for every component, for the CLI."""
        report = []
        for i, u in enumerate(self.users):
            failures = u.types.self_check()
            report.append(
                {
                    "check": f"user{i}.types.self_consistency",
                    "passed": not failures,
                    "detail": "; ".join(failures) if failures else "ok",
                }
            )
            res = self._profile.results[i]
            detail = "certified"
            if not res.certified:
                detail = (
                    "virtual type decreases between "
                    f"{res.witness_types[0]:.6g} and {res.witness_types[1]:.6g}"
                )
            report.append(
                {
                    "check": f"user{i}.types.regularity",
                    "passed": res.certified,
                    "detail": detail,
                }
            )
        return report

    # internal batch plumbing

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_users,):
            raise DomainError(
                f"expected {self.n_users} reports, got shape {theta.shape}"
            )
        for i, d in enumerate(self.type_dists):
            if not (d.lo <= theta[i] <= d.hi):
                raise DomainError(
                    f"report {theta[i]} for user {i} outside support [{d.lo}, {d.hi}]"
                )
        return theta

    def _require_certified(self):
        if self.allow_uncertified:
            return
        bad = self._profile.uncertified_users()
        if bad:
            raise ValidationError(
                "regularity not certified for users "
                + ", ".join(str(i) for i in bad)
                + "; operations on this scenario are refused without an explicit override",
                failures=[
                    f"user {i}: virtual type decreases near "
                    f"{self._profile.results[i].witness_types[0]:.6g}"
                    for i in bad
                ],
            )

    def _virtual_rows(self, theta_rows):
        cols = [
            self._profile.virtual(i, theta_rows[:, i]) for i in range(self.n_users)
        ]
        return np.ascontiguousarray(np.column_stack(cols))

    def _solve_rows(self, theta_rows):
        weights = self._virtual_rows(np.asarray(theta_rows, dtype=float))
        q, lam, kkt, nzero, status = _kernels.fd_alloc_rows(
            weights,
            self._snr,
            self._mass,
            self._offs,
            self.bandwidth,
            BUDGET_RTOL,
            _INNER_RTOL,
            _OUTER_CAP,
            _INNER_CAP,
        )
        if (status != _kernels.STATUS_OK).any():
            rows = np.nonzero(status != _kernels.STATUS_OK)[0]
            raise SolverError(
                "water-filling failed to meet the budget tolerance",
                diagnostics={
                    "rows": rows[:8].tolist(),
                    "status": status[rows[:8]].tolist(),
                },
            )
        return q, lam, kkt, nzero

    def _rate_col(self, i, x):
        """psi_i at each bandwidth in x, vectorized; zero stays zero."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        if pos.any():
            c = self._snr[self._offs[i] : self._offs[i + 1]]
            p = self._mass[self._offs[i] : self._offs[i + 1]]
            xs = x[pos, np.newaxis]
            out[pos] = (p * xs * np.log1p(c / xs)).sum(axis=1)
        return out

    def _rates_of(self, q_rows):
        return np.column_stack(
            [self._rate_col(i, q_rows[:, i]) for i in range(self.n_users)]
        )


@dataclass(frozen=True)
class FdOutcome:
    """Solved outcome at one report profile.

    ``multiplier`` is the water level shared by active users and
    ``kkt_residual`` the largest deviation of an active user's weighted
    marginal rate from it; payments are present only when taxes were
    requested, with ``tax_errors`` the one-sided grid truncation bounds.
    """

    allocation: np.ndarray
    multiplier: float
    kkt_residual: float
    active_set: tuple
    payments: np.ndarray | None = None
    tax_errors: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_record(self):
        rec = {
            "allocation": [float(v) for v in self.allocation],
            "multiplier": float(self.multiplier),
            "kkt_residual": float(self.kkt_residual),
            "active_set": list(self.active_set),
            "diagnostics": dict(self.diagnostics),
        }
        if self.payments is not None:
            rec["payments"] = [float(v) for v in self.payments]
            rec["tax_errors"] = [float(v) for v in self.tax_errors]
        return rec


class _FdBatch:
    """Adapter giving the interim machinery vectorized access to the solver."""

    def __init__(self, scenario: FdScenario):
        self.scenario = scenario

    @property
    def n_users(self):
        return self.scenario.n_users

    @property
    def dists(self):
        return self.scenario.type_dists

    def support_lo(self, i):
        return self.scenario.type_dists[i].lo

    def virtual_col(self, i, values):
        return self.scenario.virtual_profile.virtual(i, np.asarray(values, dtype=float))

    def own_values(self, i, rows):
        # a nonpositive virtual type forces a zero slice, so those rows
        # never reach the solver
        rows = np.asarray(rows, dtype=float)
        out = np.zeros(rows.shape[0])
        active = self.virtual_col(i, rows[:, i]) > 0
        if active.any():
            q, _, _, _ = self.scenario._solve_rows(rows[active])
            out[active] = self.scenario._rate_col(i, q[:, i])
        return out

    def own_values_all(self, rows):
        q, _, _, _ = self.scenario._solve_rows(np.asarray(rows, dtype=float))
        return self.scenario._rates_of(q)


def fd_allocate(scenario: FdScenario, theta) -> FdOutcome:
    """Optimal bandwidth slices at one report profile.

    The returned allocation is feasible to within ``BUDGET_RTOL`` of the
    budget and exhausts it whenever some virtual type is positive.
    """
    theta = scenario._check_theta(theta)
    scenario._require_certified()
    q, lam, kkt, nzero = scenario._solve_rows(theta[np.newaxis, :])
    weights = scenario._virtual_rows(theta[np.newaxis, :])[0]
    active = tuple(int(i) for i in np.nonzero(weights > 0)[0])
    return FdOutcome(
        allocation=q[0],
        multiplier=float(lam[0]),
        kkt_residual=float(kkt[0]),
        active_set=active,
        diagnostics={"underflow_zeroed": int(nzero[0])},
    )


def fd_payment(scenario: FdScenario, theta, grid_m: int = DEFAULT_TAX_GRID) -> FdOutcome:
    """Allocation plus envelope taxes at one report profile.

    The tax of user i is theta_i times their realized rate minus a
    right-endpoint Riemann sum of the realized rate over ``grid_m`` equal
    steps of the own report from the bottom of the support up to theta_i.
    The sum never undershoots the integral it truncates, so each reported
    tax overstates the exact one by at most the matching entry of
    ``tax_errors``; doubling ``grid_m`` halves that bound exactly.
    """
    if grid_m < 1:
        raise DomainError("grid_m must be at least 1")
    theta = scenario._check_theta(theta)
    scenario._require_certified()
    batch = _FdBatch(scenario)
    out = fd_allocate(scenario, theta)
    rates = scenario._rates_of(out.allocation[np.newaxis, :])[0]
    n = scenario.n_users
    payments = np.zeros(n)
    errors = np.zeros(n)
    drops = 0
    weights = scenario._virtual_rows(theta[np.newaxis, :])[0]
    for i in range(n):
        lo = scenario.type_dists[i].lo
        if weights[i] <= 0.0 or theta[i] <= lo:
            # never allocated below this report, or a zero-width integral
            payments[i] = theta[i] * rates[i]
            continue
        s_grid = np.linspace(lo, theta[i], grid_m + 1)[:-1]
        rows = np.repeat(theta[np.newaxis, :], grid_m, axis=0)
        rows[:, i] = s_grid
        values = batch.own_values(i, rows)
        delta = (theta[i] - lo) / grid_m
        tax = delta * (values[1:].sum() + rates[i])
        payments[i] = theta[i] * rates[i] - tax
        errors[i] = delta * (rates[i] - values[0])
        path = np.append(values, rates[i])[:, np.newaxis]
        drops += int(_count_drops(path).sum())
    diagnostics = dict(out.diagnostics)
    diagnostics["integrand_drops"] = drops
    return FdOutcome(
        allocation=out.allocation,
        multiplier=out.multiplier,
        kkt_residual=out.kkt_residual,
        active_set=out.active_set,
        payments=payments,
        tax_errors=errors,
        diagnostics=diagnostics,
    )


def fd_payment_via_inverse_rates(
    scenario: FdScenario, theta, levels: int = DEFAULT_TAX_GRID
):
    """Independent tax computation through the inverse of the rate curve.

    Rewrites the envelope tax as the bottom-type term plus the integral,
    over realized-rate levels, of the lowest own-report reaching each
    level.  The level integral uses a midpoint rule and the inner
    inversions run a fixed-depth bisection, so this path shares no code
    or discretization with :func:`fd_payment` and serves as a cross-check.

    Returns (payments, error_bounds).
    """
    if levels < 1:
        raise DomainError("levels must be at least 1")
    theta = scenario._check_theta(theta)
    scenario._require_certified()
    batch = _FdBatch(scenario)
    n = scenario.n_users
    weights = scenario._virtual_rows(theta[np.newaxis, :])[0]
    rates = scenario._rates_of(scenario._solve_rows(theta[np.newaxis, :])[0])[0]
    payments = np.zeros(n)
    errors = np.zeros(n)
    for i in range(n):
        if weights[i] <= 0.0:
            continue
        lo = scenario.type_dists[i].lo
        row_lo = theta.copy()
        row_lo[i] = lo
        y_lo = float(batch.own_values(i, row_lo[np.newaxis, :])[0])
        y_hi = float(rates[i])
        base = lo * y_lo
        span = y_hi - y_lo
        if span <= 1e-15 * max(1.0, abs(y_hi)):
            payments[i] = base
            continue
        dy = span / levels
        y_nodes = y_lo + dy * (np.arange(levels) + 0.5)
        s_lo = np.full(levels, lo)
        s_hi = np.full(levels, theta[i])
        for _ in range(_LEVEL_BISECTIONS):
            mid = 0.5 * (s_lo + s_hi)
            rows = np.repeat(theta[np.newaxis, :], levels, axis=0)
            rows[:, i] = mid
            reached = batch.own_values(i, rows) >= y_nodes
            s_hi = np.where(reached, mid, s_hi)
            s_lo = np.where(reached, s_lo, mid)
        payments[i] = base + dy * s_hi.sum()
        errors[i] = dy * (theta[i] - lo) + span * (theta[i] - lo) * 2.0**-52
    return payments, errors


def fd_interim(
    scenario: FdScenario,
    user: int,
    report: float,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    grid_m: int = DEFAULT_TAX_GRID,
) -> InterimEstimate:
    """Monte Carlo interim rate and tax of one report, opponents drawn truthfully."""
    scenario._require_certified()
    return interim_estimate(_FdBatch(scenario), user, report, mc_samples, seed, grid_m)


def fd_expected_revenue(
    scenario: FdScenario,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    grid_m: int = DEFAULT_TAX_GRID,
) -> RevenueEstimate:
    """Monte Carlo expected revenue under truthful play, with its virtual-surplus twin."""
    scenario._require_certified()
    return revenue_estimate(_FdBatch(scenario), mc_samples, seed, grid_m)
