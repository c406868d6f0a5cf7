"""Interim (in-expectation-over-opponents) quantities shared by both mechanisms.

A mechanism module hands the functions here a small batch adapter with

    n_users          -- int
    dists            -- tuple of type distributions, one per user
    support_lo(i)    -- lower end of user i's type support
    own_values(i, rows)     -- realized rate of user i at each type row
    own_values_all(rows)    -- (rows, users) matrix of realized rates
    virtual_col(i, values)  -- virtual types of user i, vectorized

and gets back per-draw tables: the realized rate of a report, the
grid-approximated tax, the one-sided tax truncation bound, and a count
of detected drops in the tax integrand along the own-type grid.  The
mechanisms differ only in how ``own_values`` is computed, so everything
above the allocation solver lives here once.

All randomness flows through ``numpy.random.default_rng`` seeded with a
(seed, stream, index) tuple; repeated calls with the same arguments are
bit-identical.
"""

from dataclasses import dataclass, fields
import math

import numpy as np

from .distributions import sample_types
from .errors import DomainError

# stream tags separating the rng consumers that hang off one user seed
STREAM_INTERIM = 1
STREAM_REVENUE = 2
STREAM_VERIFY = 3
STREAM_STARTS = 4

# a tax-integrand drop must clear this tolerance before it is flagged,
# so solver noise at its own convergence scale stays silent
MONOTONE_ABS_TOL = 1e-7
MONOTONE_REL_TOL = 1e-9

DEFAULT_TAX_GRID = 64
DEFAULT_MC_SAMPLES = 4096


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(n))


def _count_drops(values):
    """Number of tolerated-monotonicity violations along axis 0.

    ``values`` has shape (grid, draws); returns an int64 vector of per-draw
    drop counts.
    """
    if values.shape[0] < 2:
        return np.zeros(values.shape[1], dtype=np.int64)
    prev = values[:-1]
    nxt = values[1:]
    slack = MONOTONE_ABS_TOL + MONOTONE_REL_TOL * np.abs(prev)
    return (nxt < prev - slack).sum(axis=0).astype(np.int64)


def sample_opponents(dists, user, count, seed):
    """Draw ``count`` rows of the other users' types, columns in user order."""
    others = tuple(d for j, d in enumerate(dists) if j != user)
    if not others:
        return np.empty((count, 0))
    return sample_types(others, count, (seed, STREAM_INTERIM, user))


def embed_report(report, opponents, user):
    """Full type rows with ``report`` in the user's column."""
    rows = np.insert(opponents, user, report, axis=1)
    return rows


def report_table(batch, user, report, opponents, grid_m):
    """Per-draw outcome of one (user, report) pair against opponent rows.

    Returns (rate, tax, tax_error, drops), each a vector over draws.  The
    tax is the right-endpoint Riemann sum of the realized rate over the
    own-type grid from the bottom of the support to the report; the error
    term is the exact one-sided truncation bound of that sum, and drops
    counts detected decreases of the integrand along the grid.
    """
    lo = batch.support_lo(user)
    count = opponents.shape[0]
    if report <= lo:
        rate = batch.own_values(user, embed_report(report, opponents, user))
        zero = np.zeros(count)
        return rate, report * rate, zero, np.zeros(count, dtype=np.int64)
    s_grid = np.linspace(lo, report, grid_m + 1)
    rows = np.empty((grid_m + 1, count, batch.n_users))
    for m, s in enumerate(s_grid):
        rows[m] = embed_report(s, opponents, user)
    values = batch.own_values(user, rows.reshape(-1, batch.n_users))
    values = values.reshape(grid_m + 1, count)
    delta = (report - lo) / grid_m
    integral = delta * values[1:].sum(axis=0)
    tax = report * values[-1] - integral
    tax_error = delta * (values[-1] - values[0])
    return values[-1].copy(), tax, tax_error, _count_drops(values)


@dataclass(frozen=True)
class InterimEstimate:
    """Monte Carlo summary of one user's report against opponent draws.

    ``rate_tax_cov`` is the covariance of the two sample means, so the
    standard error of theta * rate - tax combines the pieces without a
    second pass over the draws.
    """

    user: int
    report: float
    n_samples: int
    rate_mean: float
    rate_se: float
    tax_mean: float
    tax_se: float
    rate_tax_cov: float
    tax_error_mean: float
    tax_error_se: float
    nonmonotone_draws: int

    def utility_mean(self, theta):
        return theta * self.rate_mean - self.tax_mean

    def utility_se(self, theta):
        var = (theta * self.rate_se) ** 2 + self.tax_se**2
        var -= 2.0 * theta * self.rate_tax_cov
        return math.sqrt(max(var, 0.0))

    def to_record(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_record(cls, record):
        return cls(**record)


@dataclass(frozen=True)
class RevenueEstimate:
    """Monte Carlo revenue summary under truthful play.

    The identity gap pairs each draw's collected payment with its virtual
    surplus, so its standard error reflects the difference, not the two
    levels.  The omniscient mean prices every user at their realized
    value and upper-bounds any incentive-compatible take.
    """

    n_samples: int
    payment_mean: float
    payment_se: float
    virtual_surplus_mean: float
    virtual_surplus_se: float
    identity_gap_mean: float
    identity_gap_se: float
    tax_error_mean: float
    omniscient_mean: float
    omniscient_se: float
    nonmonotone_draws: int

    def to_record(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_record(cls, record):
        return cls(**record)


def interim_estimate(batch, user, report, mc_samples, seed, grid_m):
    if mc_samples < 2:
        raise DomainError("mc_samples must be at least 2 for standard errors")
    if not 0 <= user < batch.n_users:
        raise DomainError(f"user index {user} out of range")
    dist = batch.dists[user]
    if not dist.lo <= report <= dist.hi:
        raise DomainError(
            f"report {report} outside user {user} support [{dist.lo}, {dist.hi}]"
        )
    opponents = sample_opponents(batch.dists, user, mc_samples, seed)
    rate, tax, err, drops = report_table(batch, user, report, opponents, grid_m)
    rate_mean, rate_se = _mean_se(rate)
    tax_mean, tax_se = _mean_se(tax)
    err_mean, err_se = _mean_se(err)
    if mc_samples >= 2:
        cov = float(np.cov(rate, tax, ddof=1)[0, 1]) / mc_samples
    else:
        cov = 0.0
    return InterimEstimate(
        user=user,
        report=float(report),
        n_samples=int(mc_samples),
        rate_mean=rate_mean,
        rate_se=rate_se,
        tax_mean=tax_mean,
        tax_se=tax_se,
        rate_tax_cov=cov,
        tax_error_mean=err_mean,
        tax_error_se=err_se,
        nonmonotone_draws=int(drops.sum()),
    )


def revenue_estimate(batch, mc_samples, seed, grid_m):
    if mc_samples < 2:
        raise DomainError("mc_samples must be at least 2 for standard errors")
    n = batch.n_users
    draws = sample_types(batch.dists, mc_samples, (seed, STREAM_REVENUE))
    truth_values = batch.own_values_all(draws)
    virtual = np.column_stack(
        [batch.virtual_col(i, draws[:, i]) for i in range(n)]
    )
    virtual_b = (virtual * truth_values).sum(axis=1)
    omni_b = (draws * truth_values).sum(axis=1)
    pay_b = np.zeros(mc_samples)
    err_b = np.zeros(mc_samples)
    drops_total = 0
    grid_fracs = np.arange(grid_m) / grid_m
    for i in range(n):
        lo = batch.support_lo(i)
        span = draws[:, i] - lo
        delta = span / grid_m
        # own-type grid rows s_0 .. s_{M-1}; the top node is the draw itself
        s_nodes = lo + np.multiply.outer(grid_fracs, span)
        rows = np.repeat(draws[np.newaxis, :, :], grid_m, axis=0).copy()
        rows[:, :, i] = s_nodes
        values = batch.own_values(i, rows.reshape(-1, n)).reshape(grid_m, mc_samples)
        tax_b = delta * (values[1:].sum(axis=0) + truth_values[:, i])
        pay_b += draws[:, i] * truth_values[:, i] - tax_b
        err_b += delta * (truth_values[:, i] - values[0])
        path = np.vstack([values, truth_values[np.newaxis, :, i]])
        drops_total += int((_count_drops(path) > 0).sum())
    pay_mean, pay_se = _mean_se(pay_b)
    virt_mean, virt_se = _mean_se(virtual_b)
    gap_mean, gap_se = _mean_se(pay_b - virtual_b)
    omni_mean, omni_se = _mean_se(omni_b)
    return RevenueEstimate(
        n_samples=int(mc_samples),
        payment_mean=pay_mean,
        payment_se=pay_se,
        virtual_surplus_mean=virt_mean,
        virtual_surplus_se=virt_se,
        identity_gap_mean=gap_mean,
        identity_gap_se=gap_se,
        tax_error_mean=float(err_b.mean()),
        omniscient_mean=omni_mean,
        omniscient_se=omni_se,
        nonmonotone_draws=drops_total,
    )
