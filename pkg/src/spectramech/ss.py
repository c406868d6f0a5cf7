"""Spectrum-sharing mechanism: all users transmit in one shared band.

Power given to one user degrades everyone else through interference, so
the virtual-surplus objective is not concave and the solver is a
multistart projected gradient ascent: a fixed family of deterministic
starts (origin, even split, each user alone at full power) plus
seed-derived random interior starts, each run with backtracking line
search until the projected-gradient residual is small.  The winner is
the converged start with the highest objective, earliest start on ties,
which keeps results reproducible for a given seed however the restarts
are scheduled.

Because allocations are not forced to zero for nonpositive virtual
types, the envelope tax integrand can genuinely decrease in the own
report.  Detected decreases are counted and reported on every payment
path; they are never silently dropped.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distributions import (
    DEFAULT_REGULARITY_GRID,
    TypeDistribution,
    VirtualTypeProfile,
)
from .errors import DomainError, NumericsError, SolverError, ValidationError
from .interim import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_TAX_GRID,
    STREAM_STARTS,
    InterimEstimate,
    RevenueEstimate,
    _count_drops,
    interim_estimate,
    revenue_estimate,
)
from .rates import SsPhysical

DEFAULT_RESTARTS = 16
DEFAULT_MAX_ITERATIONS = 5000
RESIDUAL_TOL = 1e-8
_ARMIJO_C = 1e-4
_ARMIJO_SHRINK = 0.5
_MAX_BACKTRACKS = 60


@dataclass(frozen=True, eq=False)
class SsScenario:
    """Fixed data of the shared-band problem: physics, budget, type laws."""

    physical: SsPhysical
    total_power: float
    type_dists: tuple
    regularity_grid: int = DEFAULT_REGULARITY_GRID
    allow_uncertified: bool = False

    def __post_init__(self):
        if not isinstance(self.physical, SsPhysical):
            raise DomainError("physical must be an SsPhysical")
        if not np.isfinite(self.total_power) or self.total_power <= 0:
            raise DomainError("total_power must be positive and finite")
        object.__setattr__(self, "type_dists", tuple(self.type_dists))
        for d in self.type_dists:
            if not isinstance(d, TypeDistribution):
                raise DomainError("type_dists must hold TypeDistribution instances")
        if len(self.type_dists) != self.physical.n_users:
            raise DomainError(
                f"{len(self.type_dists)} type distributions for "
                f"{self.physical.n_users} users"
            )
        profile = VirtualTypeProfile.build(
            self.type_dists, grid_points=self.regularity_grid
        )
        object.__setattr__(self, "_profile", profile)

    @property
    def n_users(self):
        return self.physical.n_users

    @property
    def virtual_profile(self) -> VirtualTypeProfile:
        return self._profile

    def validation_report(self):
        report = []
        for i, d in enumerate(self.type_dists):
            failures = d.self_check()
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


def build_starts(scenario: SsScenario, restarts: int, seed) -> tuple:
    """Start points for the multistart search, with stable labels.

    Deterministic members come first: the origin (so an all-nonpositive
    weight row settles at zero power), the even split, and full power to
    each user alone.  Random interior starts follow, the r-th drawn from
    a generator keyed by (seed, stream, r) so its value does not depend
    on execution order.
    """
    if restarts < 0:
        raise DomainError("restarts must be nonnegative")
    n = scenario.n_users
    p = scenario.total_power
    points = [np.zeros(n), np.full(n, p / n)]
    labels = ["origin", "uniform"]
    for k in range(n):
        e = np.zeros(n)
        e[k] = p
        points.append(e)
        labels.append(f"single:{k}")
    for r in range(restarts):
        rng = np.random.default_rng((seed, STREAM_STARTS, r))
        direction = rng.exponential(size=n)
        direction /= direction.sum()
        points.append(p * rng.random() * direction)
        labels.append(f"random:{r}")
    return np.ascontiguousarray(np.vstack(points)), tuple(labels)


def _solve_rows(scenario, theta_rows, starts, max_iterations):
    weights = scenario._virtual_rows(np.asarray(theta_rows, dtype=float))
    q, obj, resid, best, iters, status = _kernels.ss_solve_rows(
        weights,
        scenario.physical.gain_matrix,
        scenario.physical.noise_power,
        scenario.physical.bandwidth,
        scenario.total_power,
        starts,
        RESIDUAL_TOL,
        max_iterations,
        _ARMIJO_C,
        _ARMIJO_SHRINK,
        _MAX_BACKTRACKS,
    )
    bad = np.nonzero(status == _kernels.STATUS_NONFINITE)[0]
    if bad.size:
        raise NumericsError(
            "non-finite objective or gradient during power search",
            diagnostics={"rows": bad[:8].tolist()},
        )
    bad = np.nonzero(status == _kernels.STATUS_ITER_CAP)[0]
    if bad.size:
        raise SolverError(
            "no restart reached the projected-gradient tolerance",
            diagnostics={
                "rows": bad[:8].tolist(),
                "max_iterations": max_iterations,
                "starts": starts.shape[0],
            },
        )
    return q, obj, resid, best, iters


@dataclass(frozen=True)
class SsOutcome:
    """Solved outcome at one report profile.

    ``kkt_residual_projected`` is the projected-gradient norm at the
    winning point; ``nonmonotone_flags`` counts detected decreases of
    each user's tax integrand and is present only on payment paths.
    """

    allocation: np.ndarray
    objective: float
    restarts_used: int
    best_start: str
    best_restart_seed: int | None
    kkt_residual_projected: float
    payments: np.ndarray | None = None
    tax_errors: np.ndarray | None = None
    nonmonotone_flags: tuple | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_record(self):
        rec = {
            "allocation": [float(v) for v in self.allocation],
            "objective": float(self.objective),
            "optimality": "up to local optimality",
            "restarts_used": int(self.restarts_used),
            "best_start": self.best_start,
            "best_restart_seed": self.best_restart_seed,
            "kkt_residual_projected": float(self.kkt_residual_projected),
            "diagnostics": dict(self.diagnostics),
        }
        if self.payments is not None:
            rec["payments"] = [float(v) for v in self.payments]
            rec["tax_errors"] = [float(v) for v in self.tax_errors]
            rec["nonmonotone_flags"] = list(self.nonmonotone_flags)
        return rec


class _SsBatch:
    """Adapter running every row of types through the multistart solver."""

    def __init__(self, scenario, restarts, seed, max_iterations=DEFAULT_MAX_ITERATIONS):
        self.scenario = scenario
        self.starts, self.labels = build_starts(scenario, restarts, seed)
        self.max_iterations = max_iterations

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

    def solve(self, rows):
        return _solve_rows(self.scenario, rows, self.starts, self.max_iterations)

    def own_values(self, i, rows):
        q = self.solve(rows)[0]
        return self.rates_of(q)[:, i]

    def own_values_all(self, rows):
        return self.rates_of(self.solve(rows)[0])

    def rates_of(self, q_rows):
        phys = self.scenario.physical
        q_rows = np.asarray(q_rows, dtype=float)
        own = q_rows * np.diag(phys.gain_matrix)
        received = q_rows @ phys.gain_matrix
        return phys.bandwidth * np.log1p(own / (phys.noise_power + received - own))


def ss_allocate(
    scenario: SsScenario,
    theta,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    _max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> SsOutcome:
    """Best found power split at one report profile.

    The search is deterministic given (restarts, seed).  Multistart
    ascent certifies only a stationary point, so the objective is a lower
    bound on the global optimum; more restarts never lower it.
    """
    theta = scenario._check_theta(theta)
    scenario._require_certified()
    batch = _SsBatch(scenario, restarts, seed, _max_iterations)
    q, obj, resid, best, _ = batch.solve(theta[np.newaxis, :])
    label = batch.labels[int(best[0])]
    return SsOutcome(
        allocation=q[0],
        objective=float(obj[0]),
        restarts_used=len(batch.labels),
        best_start=label,
        best_restart_seed=int(label.split(":")[1]) if label.startswith("random:") else None,
        kkt_residual_projected=float(resid[0]),
    )


def ss_payment(
    scenario: SsScenario,
    theta,
    grid_m: int = DEFAULT_TAX_GRID,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
) -> SsOutcome:
    """Allocation plus envelope taxes, flagging non-monotone integrands.

    Taxes discretize the own-report integral exactly as the bandwidth
    mechanism does.  The reported error bound is one-sided only where the
    integrand is non-decreasing; a user whose flag count is positive has
    a genuinely non-monotone integrand and their bound is indicative, not
    certified.
    """
    if grid_m < 1:
        raise DomainError("grid_m must be at least 1")
    theta = scenario._check_theta(theta)
    scenario._require_certified()
    out = ss_allocate(scenario, theta, restarts=restarts, seed=seed)
    batch = _SsBatch(scenario, restarts, seed)
    rates = batch.rates_of(out.allocation[np.newaxis, :])[0]
    n = scenario.n_users
    payments = np.zeros(n)
    errors = np.zeros(n)
    flags = []
    for i in range(n):
        lo = scenario.type_dists[i].lo
        if theta[i] <= lo:
            payments[i] = theta[i] * rates[i]
            flags.append(0)
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
        flags.append(int(_count_drops(path).sum()))
    return SsOutcome(
        allocation=out.allocation,
        objective=out.objective,
        restarts_used=out.restarts_used,
        best_start=out.best_start,
        best_restart_seed=out.best_restart_seed,
        kkt_residual_projected=out.kkt_residual_projected,
        payments=payments,
        tax_errors=errors,
        nonmonotone_flags=tuple(flags),
        diagnostics=dict(out.diagnostics),
    )


def ss_interim(
    scenario: SsScenario,
    user: int,
    report: float,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    grid_m: int = DEFAULT_TAX_GRID,
    restarts: int = DEFAULT_RESTARTS,
) -> InterimEstimate:
    """Monte Carlo interim rate and tax of one report in the shared band."""
    scenario._require_certified()
    batch = _SsBatch(scenario, restarts, seed)
    return interim_estimate(batch, user, report, mc_samples, seed, grid_m)


def ss_expected_revenue(
    scenario: SsScenario,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    grid_m: int = DEFAULT_TAX_GRID,
    restarts: int = DEFAULT_RESTARTS,
) -> RevenueEstimate:
    """Monte Carlo expected revenue under truthful play in the shared band."""
    scenario._require_certified()
    batch = _SsBatch(scenario, restarts, seed)
    return revenue_estimate(batch, mc_samples, seed, grid_m)
