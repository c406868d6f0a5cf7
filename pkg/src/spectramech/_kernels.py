"""Compiled inner loops for the allocation solvers.

Internal module.  Everything here works on plain float64 arrays so the
hot paths (one solve per Monte Carlo draw and tax-grid node) run at
machine speed; the public wrappers in :mod:`spectramech.fd` and
:mod:`spectramech.ss` own validation, error mapping, and reporting.

The gain law of FD user ``i`` arrives as the slice
``snr[offs[i]:offs[i+1]]`` with matching masses ``mass[...]``, where each
entry c = h * P / N0.  The rate and its derivatives are then

    psi(x)   = sum_k mass_k * x * log1p(c_k / x)
    psi'(x)  = sum_k mass_k * (log1p(c_k / x) - c_k / (x + c_k))
    psi''(x) = -sum_k mass_k * c_k^2 / ((c_k + x)^2 * x)

psi' is strictly decreasing and convex, which makes the bracketed Newton
inner solve monotone from the right after its first step.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_ITER_CAP = 1
STATUS_NONFINITE = 2

# numerically-zero floor for water-filling: a root below W * exp(-_LOG_FLOOR)
# cannot be represented meaningfully, the user is reported as underflowed
_UNDERFLOW_FRACTION = 1e-30


@njit(cache=True)
def _dpsi(snr, mass, k0, k1, x):
    s = 0.0
    for k in range(k0, k1):
        c = snr[k]
        s += mass[k] * (math.log1p(c / x) - c / (x + c))
    return s


@njit(cache=True)
def _d2psi(snr, mass, k0, k1, x):
    s = 0.0
    for k in range(k0, k1):
        c = snr[k]
        d = c + x
        s -= mass[k] * c * c / (d * d * x)
    return s


@njit(cache=True)
def _inner_solve(snr, mass, k0, k1, w, lam, floor, budget, warm, rtol, itcap):
    """Root of w * psi'(x) = lam on (0, budget].

    Returns (x, underflowed).  The marginal-value curve w * psi'(.) is
    decreasing and convex, so a Newton iterate from inside the bracket
    never overshoots past the root to the left; any step that would leave
    the bracket is replaced by its midpoint.
    """
    if w * _dpsi(snr, mass, k0, k1, budget) >= lam:
        return budget, False
    if w * _dpsi(snr, mass, k0, k1, floor) < lam:
        # root below the representable floor; hand back an exact zero
        return 0.0, True
    lo = floor
    hi = budget
    x = warm
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(itcap):
        g = w * _dpsi(snr, mass, k0, k1, x) - lam
        if g > 0.0:
            lo = x
        elif g < 0.0:
            hi = x
        else:
            return x, False
        gp = w * _d2psi(snr, mass, k0, k1, x)
        xn = x - g / gp
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        dx = xn - x
        if dx < 0.0:
            dx = -dx
        x = xn
        if dx <= rtol * x:
            break
    return x, False


@njit(cache=True)
def fd_alloc_rows(
    weights,
    snr,
    mass,
    offs,
    budget,
    sum_rtol,
    inner_rtol,
    outer_cap,
    inner_cap,
):
    """Water-filling over rows of virtual-type weights.

    For each row: maximize sum_i weights[i] * psi_i(x_i) subject to
    x >= 0, sum x <= budget.  Users with nonpositive weight get zero.
    Among the rest a common water level lam equalizes marginal values
    w_i * psi_i'(x_i); it is located by bisection between the provable
    bounds max_i w_i psi_i'(budget) and max_i w_i psi_i'(budget / n),
    stopping once |sum x - budget| <= sum_rtol * budget.

    Returns (x, lam, kkt, nzero, status): the reported lam is the
    midpoint of the achieved marginal values over numerically positive
    allocations and kkt their half-spread, so a run where every positive
    weight but one underflows still reports an exact stationarity pair.
    ``nzero`` counts positive-weight users whose allocation underflowed
    to zero.
    """
    n_rows, n_users = weights.shape
    x_out = np.zeros((n_rows, n_users))
    lam_out = np.zeros(n_rows)
    kkt_out = np.zeros(n_rows)
    nzero = np.zeros(n_rows, np.int64)
    status = np.zeros(n_rows, np.int8)
    floor = budget * _UNDERFLOW_FRACTION
    x = np.zeros(n_users)
    warm = np.zeros(n_users)
    for b in range(n_rows):
        n_act = 0
        last = -1
        for i in range(n_users):
            if weights[b, i] > 0.0:
                n_act += 1
                last = i
        if n_act == 0:
            continue
        if n_act == 1:
            w = weights[b, last]
            x_out[b, last] = budget
            lam_out[b] = w * _dpsi(snr, mass, offs[last], offs[last + 1], budget)
            continue
        lam_lo = 0.0
        lam_hi = 0.0
        x_even = budget / n_act
        for i in range(n_users):
            w = weights[b, i]
            if w <= 0.0:
                continue
            v = w * _dpsi(snr, mass, offs[i], offs[i + 1], budget)
            if v > lam_lo:
                lam_lo = v
            v = w * _dpsi(snr, mass, offs[i], offs[i + 1], x_even)
            if v > lam_hi:
                lam_hi = v
        tol = sum_rtol * budget
        for i in range(n_users):
            warm[i] = x_even
        ok = False
        for _ in range(outer_cap):
            lam = 0.5 * (lam_lo + lam_hi)
            total = 0.0
            for i in range(n_users):
                w = weights[b, i]
                if w <= 0.0:
                    x[i] = 0.0
                    continue
                xi, _uf = _inner_solve(
                    snr,
                    mass,
                    offs[i],
                    offs[i + 1],
                    w,
                    lam,
                    floor,
                    budget,
                    warm[i],
                    inner_rtol,
                    inner_cap,
                )
                x[i] = xi
                if xi > 0.0:
                    warm[i] = xi
                total += xi
            diff = total - budget
            if -tol <= diff <= tol:
                ok = True
                break
            if diff > 0.0:
                lam_lo = lam
            else:
                lam_hi = lam
        if not ok:
            status[b] = STATUS_ITER_CAP
        m_lo = 1e300
        m_hi = -1e300
        nz = 0
        for i in range(n_users):
            x_out[b, i] = x[i]
            if weights[b, i] > 0.0:
                if x[i] == 0.0:
                    nz += 1
                else:
                    m = weights[b, i] * _dpsi(snr, mass, offs[i], offs[i + 1], x[i])
                    if m < m_lo:
                        m_lo = m
                    if m > m_hi:
                        m_hi = m
        nzero[b] = nz
        lam_out[b] = 0.5 * (m_lo + m_hi)
        kkt_out[b] = 0.5 * (m_hi - m_lo)
    return x_out, lam_out, kkt_out, nzero, status


@njit(cache=True)
def project_budget(point, total):
    """Euclidean projection onto {x >= 0, sum x <= total}.

    When clipping negatives already lands inside the budget that clip is
    the projection; otherwise the projection sits on the face
    sum x = total and is found by the sorted-threshold rule.
    """
    n = point.shape[0]
    out = np.empty(n)
    s = 0.0
    for i in range(n):
        v = point[i]
        if v < 0.0:
            v = 0.0
        out[i] = v
        s += v
    if s <= total:
        return out
    u = np.sort(point)[::-1]
    running = 0.0
    tau = 0.0
    for k in range(n):
        running += u[k]
        t = (running - total) / (k + 1)
        if u[k] - t > 0.0:
            tau = t
    for i in range(n):
        v = point[i] - tau
        out[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def _ss_objective(w, gains, noise_power, band, x):
    n = x.shape[0]
    val = 0.0
    for i in range(n):
        own = gains[i, i] * x[i]
        den = noise_power
        for k in range(n):
            if k != i:
                den += gains[k, i] * x[k]
        val += w[i] * band * math.log1p(own / den)
    return val


@njit(cache=True)
def _ss_gradient(w, gains, noise_power, band, x, out):
    n = x.shape[0]
    for j in range(n):
        out[j] = 0.0
    for i in range(n):
        own = gains[i, i] * x[i]
        den = noise_power
        for k in range(n):
            if k != i:
                den += gains[k, i] * x[k]
        out[i] += w[i] * band * gains[i, i] / (den + own)
        cross = -w[i] * band * own / (den * (den + own))
        for j in range(n):
            if j != i:
                out[j] += cross * gains[j, i]


@njit(cache=True)
def ss_solve_rows(
    weights,
    gains,
    noise_power,
    band,
    total_power,
    starts,
    resid_tol,
    max_iters,
    armijo_c,
    armijo_shrink,
    max_backtracks,
):
    """Multistart projected gradient ascent over rows of weights.

    Each row maximizes sum_i weights[i] * rate_i(x) over the power budget
    set.  Every start in ``starts`` is run to convergence (projected
    gradient residual below ``resid_tol``) or to the iteration cap; the
    winner is the converged start with the highest objective, earliest
    start on ties.  A row where no start converges is flagged in
    ``status``; a non-finite gradient aborts the row immediately.

    Returns (x, objective, residual, best_start, iters, status).
    """
    n_rows, n_users = weights.shape
    n_starts = starts.shape[0]
    near_band = 100.0 * resid_tol
    x_out = np.zeros((n_rows, n_users))
    f_out = np.full(n_rows, -np.inf)
    r_out = np.zeros(n_rows)
    best_out = np.full(n_rows, -1, np.int64)
    iters_out = np.zeros(n_rows, np.int64)
    status = np.zeros(n_rows, np.int8)
    g = np.zeros(n_users)
    trial = np.zeros(n_users)
    for b in range(n_rows):
        w = weights[b]
        any_converged = False
        broken = False
        for s in range(n_starts):
            x = project_budget(starts[s], total_power)
            f = _ss_objective(w, gains, noise_power, band, x)
            converged = False
            resid = 0.0
            damping = 1.0
            best_near_resid = np.inf
            stall = 0
            for _ in range(max_iters):
                iters_out[b] += 1
                _ss_gradient(w, gains, noise_power, band, x, g)
                finite = True
                for i in range(n_users):
                    if not math.isfinite(g[i]):
                        finite = False
                if not finite or not math.isfinite(f):
                    status[b] = STATUS_NONFINITE
                    broken = True
                    break
                for i in range(n_users):
                    trial[i] = x[i] + g[i]
                y = project_budget(trial, total_power)
                dist2 = 0.0
                for i in range(n_users):
                    d = y[i] - x[i]
                    dist2 += d * d
                resid = math.sqrt(dist2)
                if resid <= resid_tol:
                    converged = True
                    break
                if resid <= near_band:
                    # objective differences are below float resolution here,
                    # so Armijo accepts on ties and the unit-step map can
                    # sustain a two-point cycle just above the tolerance;
                    # once progress stalls, damp the fixed-point step to
                    # contract that mode
                    if resid < best_near_resid * (1.0 - 1e-3):
                        best_near_resid = resid
                        stall = 0
                    else:
                        stall += 1
                        if stall >= 3:
                            damping = max(0.5 * damping, 0.015625)
                            stall = 0
                    moved = False
                    for i in range(n_users):
                        shift = damping * (y[i] - x[i])
                        if shift != 0.0:
                            moved = True
                        x[i] = x[i] + shift
                    if not moved:
                        break
                    f = _ss_objective(w, gains, noise_power, band, x)
                    continue
                # backtracking line search along the projection arc
                t = 1.0
                accepted = False
                ft = f
                for _bt in range(max_backtracks):
                    for i in range(n_users):
                        trial[i] = x[i] + t * g[i]
                    y = project_budget(trial, total_power)
                    ft = _ss_objective(w, gains, noise_power, band, y)
                    inner = 0.0
                    for i in range(n_users):
                        inner += g[i] * (y[i] - x[i])
                    if ft >= f + armijo_c * inner:
                        accepted = True
                        break
                    t *= armijo_shrink
                if not accepted:
                    break
                moved = False
                for i in range(n_users):
                    if y[i] != x[i]:
                        moved = True
                    x[i] = y[i]
                f = ft
                if not moved:
                    break
            if broken:
                break
            if converged:
                if (not any_converged) or f > f_out[b]:
                    f_out[b] = f
                    r_out[b] = resid
                    best_out[b] = s
                    for i in range(n_users):
                        x_out[b, i] = x[i]
                any_converged = True
        if broken:
            continue
        if not any_converged:
            status[b] = STATUS_ITER_CAP
    return x_out, f_out, r_out, best_out, iters_out, status
