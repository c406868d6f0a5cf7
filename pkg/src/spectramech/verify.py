"""Statistical audits of mechanism properties, plus mechanisms built to fail them.

Everything here treats a mechanism as a black box with one entry point:
``outcomes(user, report, opponents)`` returning per-draw realized rate,
tax, tax-discretization bound, and integrand-drop count.  The audits
share opponent draws across all reports of a user (common random
numbers), so comparisons between reports difference out most of the
Monte Carlo noise and run at paired standard errors.

Verdicts allow the reported tax-discretization bound plus three standard
errors before declaring a violation; tightening the discretization or
adding draws therefore never flips a passing mechanism to failing, while
the deliberately broken mechanisms at the bottom of the module fail by
margins no slack absorbs.
"""

from dataclasses import dataclass, fields

import numpy as np

from .distributions import sample_types
from .errors import DomainError
from .fd import FdScenario, _FdBatch
from .interim import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_TAX_GRID,
    STREAM_VERIFY,
    report_table,
)
from .rates import expected_rate
from .ss import DEFAULT_MAX_ITERATIONS, DEFAULT_RESTARTS, SsScenario, _SsBatch

DEFAULT_REPORT_POINTS = 17
DEFAULT_TRUE_TYPES = 5
SE_MULTIPLE = 3.0
ARITHMETIC_RTOL = 1e-13


def _noise_floor(*arrays):
    """Allowance for float arithmetic, scaled to the quantities compared.

    Deterministic scenarios can make every statistical and discretization
    slack exactly zero while the computed outcomes still differ in the
    last bits; tolerances must never fall below that noise level.
    """
    scale = 1.0
    for a in arrays:
        if a.size:
            scale = max(scale, float(np.abs(a).max()))
    return ARITHMETIC_RTOL * scale


def _from_record(cls, record):
    kwargs = {}
    for f in fields(cls):
        value = record[f.name]
        kwargs[f.name] = tuple(value) if f.type is tuple else value
    return cls(**kwargs)


def _to_record(obj):
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


class EnvelopeMechanism:
    """A real mechanism exposed to the audits through its batch adapter."""

    def __init__(self, batch, grid_m):
        self._batch = batch
        self.grid_m = grid_m

    @property
    def n_users(self):
        return self._batch.n_users

    @property
    def dists(self):
        return self._batch.dists

    def support(self, i):
        d = self._batch.dists[i]
        return d.lo, d.hi

    def outcomes(self, user, report, opponents):
        return report_table(self._batch, user, report, opponents, self.grid_m)


def fd_mechanism(scenario: FdScenario, grid_m: int = DEFAULT_TAX_GRID):
    scenario._require_certified()
    return EnvelopeMechanism(_FdBatch(scenario), grid_m)


def ss_mechanism(
    scenario: SsScenario,
    grid_m: int = DEFAULT_TAX_GRID,
    restarts: int = DEFAULT_RESTARTS,
    solver_seed: int = 0,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
):
    scenario._require_certified()
    batch = _SsBatch(scenario, restarts, solver_seed, max_iterations)
    return EnvelopeMechanism(batch, grid_m)


def _opponent_draws(model, user, mc_samples, seed):
    if mc_samples < 2:
        raise DomainError("mc_samples must be at least 2 for standard errors")
    others = tuple(d for j, d in enumerate(model.dists) if j != user)
    if not others:
        return np.empty((mc_samples, 0))
    return sample_types(others, mc_samples, (seed, STREAM_VERIFY, user))


def _grid_tables(model, user, grid, opponents):
    rate = np.empty((grid.size, opponents.shape[0]))
    tax = np.empty_like(rate)
    err = np.empty_like(rate)
    drops = 0
    for g, r in enumerate(grid):
        rate[g], tax[g], err[g], d = model.outcomes(user, float(r), opponents)
        drops += int(d.sum())
    return rate, tax, err, drops


def _mean_se_rows(values):
    n = values.shape[-1]
    mean = values.mean(axis=-1)
    se = values.std(axis=-1, ddof=1) / np.sqrt(n)
    return mean, se


@dataclass(frozen=True)
class IcReport:
    """Best misreport gain of one true type against a deviation grid."""

    user: int
    true_type: float
    n_samples: int
    report_grid: tuple
    gain_means: tuple
    gain_ses: tuple
    thresholds: tuple
    best_report: float
    best_gain: float
    worst_margin: float
    passed: bool

    def to_record(self):
        return _to_record(self)

    @classmethod
    def from_record(cls, record):
        return _from_record(cls, record)


@dataclass(frozen=True)
class IrReport:
    """Truthful interim utility across the type grid of one user."""

    user: int
    n_samples: int
    theta_grid: tuple
    utility_means: tuple
    utility_ses: tuple
    thresholds: tuple
    worst_margin: float
    passed: bool

    def to_record(self):
        return _to_record(self)

    @classmethod
    def from_record(cls, record):
        return _from_record(cls, record)


@dataclass(frozen=True)
class IdentityReport:
    """Tax versus its envelope reconstruction from interim rates.

    The tolerance of each grid point combines the mechanism's reported
    tax slack, a bound on the verifier's own trapezoid error, and three
    standard errors.  For a non-decreasing integrand the trapezoid rule
    is off by at most half a grid step times the integrand's rise, which
    is what ``reconstruction_bounds`` holds; it is exact bookkeeping for
    the bandwidth mechanism and indicative where drops were flagged.
    """

    user: int
    n_samples: int
    report_grid: tuple
    tax_means: tuple
    reconstructed_means: tuple
    residual_means: tuple
    residual_ses: tuple
    tax_slack_means: tuple
    reconstruction_bounds: tuple
    tolerances: tuple
    worst_margin: float
    passed: bool

    def to_record(self):
        return _to_record(self)

    @classmethod
    def from_record(cls, record):
        return _from_record(cls, record)


@dataclass(frozen=True)
class MonotoneReport:
    """Non-decrease of the interim rate along the report grid."""

    user: int
    n_samples: int
    report_grid: tuple
    rate_means: tuple
    step_means: tuple
    step_ses: tuple
    worst_margin: float
    passed: bool

    def to_record(self):
        return _to_record(self)

    @classmethod
    def from_record(cls, record):
        return _from_record(cls, record)


def verify_ic(
    model,
    report_points: int = DEFAULT_REPORT_POINTS,
    true_type_count: int = DEFAULT_TRUE_TYPES,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
):
    """Search the deviation grid for profitable misreports, user by user.

    True types are taken at evenly spread indices of the deviation grid,
    so the truthful column is one of the compared columns and its gain is
    exactly zero.  A deviation only counts as a violation when its mean
    gain exceeds the deviation's tax-slack allowance plus three paired
    standard errors and the arithmetic noise floor.
    """
    reports = []
    for user in range(model.n_users):
        lo, hi = model.support(user)
        grid = np.linspace(lo, hi, report_points)
        opponents = _opponent_draws(model, user, mc_samples, seed)
        rate, tax, err, _ = _grid_tables(model, user, grid, opponents)
        err_mean = err.mean(axis=1)
        floor = _noise_floor(hi * rate, tax)
        idx = np.unique(
            np.round(np.linspace(0, report_points - 1, true_type_count)).astype(int)
        )
        for k in idx:
            theta = grid[k]
            diffs = theta * (rate - rate[k]) - (tax - tax[k])
            gain_mean, gain_se = _mean_se_rows(diffs)
            thresholds = err_mean + SE_MULTIPLE * gain_se + floor
            margins = gain_mean - thresholds
            best = int(np.argmax(margins))
            reports.append(
                IcReport(
                    user=user,
                    true_type=float(theta),
                    n_samples=int(mc_samples),
                    report_grid=tuple(float(v) for v in grid),
                    gain_means=tuple(float(v) for v in gain_mean),
                    gain_ses=tuple(float(v) for v in gain_se),
                    thresholds=tuple(float(v) for v in thresholds),
                    best_report=float(grid[best]),
                    best_gain=float(gain_mean[best]),
                    worst_margin=float(margins.max()),
                    passed=bool(margins.max() <= 0.0),
                )
            )
    return reports


def verify_ir(
    model,
    theta_points: int = DEFAULT_REPORT_POINTS,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
):
    """Check that truthful play never leaves a user below zero utility."""
    reports = []
    for user in range(model.n_users):
        lo, hi = model.support(user)
        grid = np.linspace(lo, hi, theta_points)
        opponents = _opponent_draws(model, user, mc_samples, seed)
        rate, tax, err, _ = _grid_tables(model, user, grid, opponents)
        utility = grid[:, np.newaxis] * rate - tax
        u_mean, u_se = _mean_se_rows(utility)
        thresholds = err.mean(axis=1) + SE_MULTIPLE * u_se + _noise_floor(hi * rate, tax)
        margins = u_mean + thresholds
        reports.append(
            IrReport(
                user=user,
                n_samples=int(mc_samples),
                theta_grid=tuple(float(v) for v in grid),
                utility_means=tuple(float(v) for v in u_mean),
                utility_ses=tuple(float(v) for v in u_se),
                thresholds=tuple(float(v) for v in thresholds),
                worst_margin=float(margins.min()),
                passed=bool(margins.min() >= 0.0),
            )
        )
    return reports


def verify_payment_identity(
    model,
    user: int,
    report_points: int = DEFAULT_REPORT_POINTS,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    base_payment: float = 0.0,
):
    """Reconstruct taxes from interim rates and compare, draw by draw.

    The reconstruction integrates each draw's rate curve with the
    trapezoid rule over the report grid, an estimator sharing nothing
    with the mechanism's own right-endpoint tax sum.  Residuals are
    judged against the reported tax slack plus three standard errors
    and the arithmetic noise floor.
    """
    lo, hi = model.support(user)
    grid = np.linspace(lo, hi, report_points)
    opponents = _opponent_draws(model, user, mc_samples, seed)
    rate, tax, err, _ = _grid_tables(model, user, grid, opponents)
    delta = (hi - lo) / (report_points - 1)
    cumulative = np.zeros_like(rate)
    cumulative[1:] = np.cumsum(0.5 * delta * (rate[1:] + rate[:-1]), axis=0)
    reconstructed = base_payment + grid[:, np.newaxis] * rate - cumulative
    residual = tax - reconstructed
    res_mean, res_se = _mean_se_rows(residual)
    tax_slack = err.mean(axis=1)
    recon_bound = 0.5 * delta * (rate - rate[0]).mean(axis=1)
    tolerances = tax_slack + recon_bound + SE_MULTIPLE * res_se + _noise_floor(tax, reconstructed)
    margins = np.abs(res_mean) - tolerances
    return IdentityReport(
        user=int(user),
        n_samples=int(mc_samples),
        report_grid=tuple(float(v) for v in grid),
        tax_means=tuple(float(v) for v in tax.mean(axis=1)),
        reconstructed_means=tuple(float(v) for v in reconstructed.mean(axis=1)),
        residual_means=tuple(float(v) for v in res_mean),
        residual_ses=tuple(float(v) for v in res_se),
        tax_slack_means=tuple(float(v) for v in tax_slack),
        reconstruction_bounds=tuple(float(v) for v in recon_bound),
        tolerances=tuple(float(v) for v in tolerances),
        worst_margin=float(margins.max()),
        passed=bool(margins.max() <= 0.0),
    )


def verify_monotone_interim(
    model,
    user: int,
    report_points: int = DEFAULT_REPORT_POINTS,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
):
    """Check the interim rate never decreases along the report grid."""
    lo, hi = model.support(user)
    grid = np.linspace(lo, hi, report_points)
    opponents = _opponent_draws(model, user, mc_samples, seed)
    rate, _, _, _ = _grid_tables(model, user, grid, opponents)
    steps = rate[1:] - rate[:-1]
    step_mean, step_se = _mean_se_rows(steps)
    margins = step_mean + SE_MULTIPLE * step_se + _noise_floor(rate)
    return MonotoneReport(
        user=int(user),
        n_samples=int(mc_samples),
        report_grid=tuple(float(v) for v in grid),
        rate_means=tuple(float(v) for v in rate.mean(axis=1)),
        step_means=tuple(float(v) for v in step_mean),
        step_ses=tuple(float(v) for v in step_se),
        worst_margin=float(margins.min()),
        passed=bool(margins.min() >= 0.0),
    )


class EqualSplitReportTax:
    """Deliberately broken: fixed even bandwidth split, tax linear in the report.

    Paying report times value makes shading the report strictly
    profitable, so the misreport audit must reject it; its tax also
    disagrees with the envelope reconstruction everywhere above the
    bottom type.
    """

    def __init__(self, scenario: FdScenario):
        self._dists = scenario.type_dists
        share = scenario.bandwidth / scenario.n_users
        self._values = np.array(
            [expected_rate(u.physical, share) for u in scenario.users]
        )

    @property
    def n_users(self):
        return len(self._dists)

    @property
    def dists(self):
        return self._dists

    def support(self, i):
        return self._dists[i].lo, self._dists[i].hi

    def outcomes(self, user, report, opponents):
        count = opponents.shape[0]
        rate = np.full(count, self._values[user])
        tax = report * rate
        return rate, tax, np.zeros(count), np.zeros(count, dtype=np.int64)


class FlatFeeMechanism:
    """Deliberately broken: a real mechanism's allocation with a flat entry fee.

    Low types pay the fee without earning it back, so the participation
    audit must reject it once the fee exceeds the bottom type's surplus.
    """

    def __init__(self, inner, fee: float):
        self._inner = inner
        self.fee = float(fee)

    @property
    def n_users(self):
        return self._inner.n_users

    @property
    def dists(self):
        return self._inner.dists

    def support(self, i):
        return self._inner.support(i)

    def outcomes(self, user, report, opponents):
        rate, _, _, drops = self._inner.outcomes(user, report, opponents)
        count = opponents.shape[0]
        return rate, np.full(count, self.fee), np.zeros(count), drops
