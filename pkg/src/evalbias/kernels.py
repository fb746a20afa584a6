"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a numpy version
with the same signature and the same arithmetic order where it matters.
The public wrappers at the bottom dispatch on :data:`evalbias._accel.USE_NUMBA`.

Energies passed to the Gibbs kernels are *offset* energies ``e = I - min(I)``
(so ``e >= 0`` and ``min(e) == 0``); ``logw`` is the log of the grid's
reference weights.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit, prange

# status codes returned by the solve kernels
OK = 0
BRACKET_NOT_FOUND = 1
NOT_CONVERGED = 2

GAMMA_LO = 1e-8
GAMMA_HI = 1e8
MAX_DOUBLINGS = 120
FEAS_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# Gibbs statistics at a single temperature
# ---------------------------------------------------------------------------


@njit(cache=True)
def gibbs_stats_numba(e, logw, gamma):
    n = e.shape[0]
    inv = 1.0 / gamma
    zmax = -np.inf
    for i in range(n):
        z = logw[i] - e[i] * inv
        if z > zmax:
            zmax = z
    s = 0.0
    s1 = 0.0
    for i in range(n):
        q = math.exp(logw[i] - e[i] * inv - zmax)
        s += q
        s1 += q * e[i]
    mean = s1 / s
    s2 = 0.0
    for i in range(n):
        q = math.exp(logw[i] - e[i] * inv - zmax)
        d = e[i] - mean
        s2 += q * d * d
    logz = zmax + math.log(s)
    var = s2 / s
    return logz, mean * inv + logz, mean, var


def gibbs_stats_numpy(e, logw, gamma):
    inv = 1.0 / gamma
    z = logw - e * inv
    zmax = z.max()
    q = np.exp(z - zmax)
    s = q.sum()
    mean = (q * e).sum() / s
    var = (q * (e - mean) ** 2).sum() / s
    logz = zmax + math.log(s)
    return logz, mean * inv + logz, mean, var


# ---------------------------------------------------------------------------
# Temperature root-finding: bracket expansion, then safeguarded Newton in
# log(gamma) that falls back to bisection whenever a step leaves the bracket.
# ---------------------------------------------------------------------------


def refine_gamma_numpy(e, logw, tau, lo, hi, gamma0, tol, maxiter):
    tlo = math.log(lo)
    thi = math.log(hi)
    t = math.log(gamma0) if lo < gamma0 < hi else 0.5 * (tlo + thi)
    best_t, best_r = t, np.inf
    for it in range(1, maxiter + 1):
        g = math.exp(t)
        _, h, _, var = gibbs_stats_numpy(e, logw, g)
        r = h - tau
        if abs(r) < best_r:
            best_r, best_t = abs(r), t
        if abs(r) <= tol:
            return g, h, it, OK
        if r < 0.0:
            tlo = t
        else:
            thi = t
        slope = var / (g * g)
        tn = 0.5 * (tlo + thi)
        if slope > 0.0:
            cand = t - r / slope
            if tlo < cand < thi:
                tn = cand
        if thi - tlo <= 1e-15 * max(1.0, abs(t)):
            break
        t = tn
    g = math.exp(best_t)
    return g, gibbs_stats_numpy(e, logw, g)[1], maxiter, NOT_CONVERGED


def solve_gamma_numpy(e, logw, tau, gamma0, tol, maxiter):
    lo, hi = GAMMA_LO, GAMMA_HI
    for k in range(MAX_DOUBLINGS + 1):
        h_lo = gibbs_stats_numpy(e, logw, lo)[1]
        if h_lo <= tau:
            break
        if k == MAX_DOUBLINGS:
            return lo, h_lo, 0, BRACKET_NOT_FOUND
        lo *= 0.5
    for k in range(MAX_DOUBLINGS + 1):
        h_hi = gibbs_stats_numpy(e, logw, hi)[1]
        if h_hi >= tau:
            break
        if k == MAX_DOUBLINGS:
            return hi, h_hi, 0, BRACKET_NOT_FOUND
        hi *= 2.0
    return refine_gamma_numpy(e, logw, tau, lo, hi, gamma0, tol, maxiter)


@njit(cache=True)
def refine_gamma_numba(e, logw, tau, lo, hi, gamma0, tol, maxiter):
    tlo = math.log(lo)
    thi = math.log(hi)
    if gamma0 > lo and gamma0 < hi:
        t = math.log(gamma0)
    else:
        t = 0.5 * (tlo + thi)
    best_t = t
    best_r = np.inf
    for it in range(1, maxiter + 1):
        g = math.exp(t)
        st = gibbs_stats_numba(e, logw, g)
        r = st[1] - tau
        if abs(r) < best_r:
            best_r = abs(r)
            best_t = t
        if abs(r) <= tol:
            return g, st[1], it, OK
        if r < 0.0:
            tlo = t
        else:
            thi = t
        slope = st[3] / (g * g)
        tn = 0.5 * (tlo + thi)
        if slope > 0.0:
            cand = t - r / slope
            if cand > tlo and cand < thi:
                tn = cand
        if thi - tlo <= 1e-15 * max(1.0, abs(t)):
            break
        t = tn
    g = math.exp(best_t)
    return g, gibbs_stats_numba(e, logw, g)[1], maxiter, NOT_CONVERGED


@njit(cache=True)
def solve_gamma_numba(e, logw, tau, gamma0, tol, maxiter):
    lo = GAMMA_LO
    hi = GAMMA_HI
    k = 0
    h_lo = gibbs_stats_numba(e, logw, lo)[1]
    while h_lo > tau:
        k += 1
        if k > MAX_DOUBLINGS:
            return lo, h_lo, 0, BRACKET_NOT_FOUND
        lo = lo * 0.5
        h_lo = gibbs_stats_numba(e, logw, lo)[1]
    k = 0
    h_hi = gibbs_stats_numba(e, logw, hi)[1]
    while h_hi < tau:
        k += 1
        if k > MAX_DOUBLINGS:
            return hi, h_hi, 0, BRACKET_NOT_FOUND
        hi = hi * 2.0
        h_hi = gibbs_stats_numba(e, logw, hi)[1]
    return refine_gamma_numba(e, logw, tau, lo, hi, gamma0, tol, maxiter)


# ---------------------------------------------------------------------------
# Entropy limits of the Gibbs family on a grid
# ---------------------------------------------------------------------------


def entropy_limits(e, logw, tie_tol=1e-12):
    """(H_min, H_max, n_argmin) for the Gibbs family of offset energy ``e``."""
    lw_max = logw.max()
    h_max = lw_max + math.log(np.exp(logw - lw_max).sum())
    at_min = e <= tie_tol
    lwm = logw[at_min]
    m = lwm.max()
    h_min = m + math.log(np.exp(lwm - m).sum())
    return h_min, h_max, int(at_min.sum())


# ---------------------------------------------------------------------------
# Grid-search scan: for each energy row and each tau, solve and score TV
# ---------------------------------------------------------------------------


@njit(cache=True)
def _scan_row_numba(e, logw, taus, target, h_min, h_max, tol, maxiter, tv_out, g_out):
    n = e.shape[0]
    p = np.empty(n)
    gamma_prev = -1.0
    hi = GAMMA_HI
    h_hi = -np.inf
    for j in range(taus.shape[0]):
        tau = taus[j]
        if not (tau > h_min + FEAS_MARGIN and tau < h_max - FEAS_MARGIN):
            tv_out[j] = np.nan
            g_out[j] = np.nan
            continue
        if gamma_prev > 0.0:
            # entropy increases with gamma and taus are sorted, so the
            # previous temperature is a valid lower end of the bracket
            k = 0
            while h_hi < tau and k <= MAX_DOUBLINGS:
                if k > 0 or h_hi > -np.inf:
                    hi *= 2.0
                h_hi = gibbs_stats_numba(e, logw, hi)[1]
                k += 1
            res = refine_gamma_numba(e, logw, tau, gamma_prev, hi, gamma_prev * 1.5, tol, maxiter)
        else:
            res = solve_gamma_numba(e, logw, tau, -1.0, tol, maxiter)
        if res[3] == BRACKET_NOT_FOUND:
            tv_out[j] = np.nan
            g_out[j] = np.nan
            continue
        g = res[0]
        gamma_prev = g
        inv = 1.0 / g
        zmax = -np.inf
        for i in range(n):
            z = logw[i] - e[i] * inv
            if z > zmax:
                zmax = z
        s = 0.0
        for i in range(n):
            p[i] = math.exp(logw[i] - e[i] * inv - zmax)
            s += p[i]
        acc = 0.0
        for i in range(n):
            acc += abs(p[i] / s - target[i])
        tv_out[j] = 0.5 * acc
        g_out[j] = g


@njit(cache=True, parallel=True)
def scan_tv_numba(energies, logw, taus, target, h_min, h_max, tol, maxiter):
    s_count = energies.shape[0]
    t_count = taus.shape[0]
    tv = np.empty((s_count, t_count))
    gam = np.empty((s_count, t_count))
    for s in prange(s_count):
        _scan_row_numba(energies[s], logw, taus, target, h_min[s], h_max, tol, maxiter, tv[s], gam[s])
    return tv, gam


def scan_tv_numpy(energies, logw, taus, target, h_min, h_max, tol, maxiter):
    s_count = energies.shape[0]
    tv = np.full((s_count, taus.shape[0]), np.nan)
    gam = np.full((s_count, taus.shape[0]), np.nan)
    for s in range(s_count):
        e = energies[s]
        gamma_prev = -1.0
        hi, h_hi = GAMMA_HI, -np.inf
        for j, tau in enumerate(taus):
            if not (h_min[s] + FEAS_MARGIN < tau < h_max - FEAS_MARGIN):
                continue
            if gamma_prev > 0.0:
                k = 0
                while h_hi < tau and k <= MAX_DOUBLINGS:
                    if k > 0 or h_hi > -np.inf:
                        hi *= 2.0
                    h_hi = gibbs_stats_numpy(e, logw, hi)[1]
                    k += 1
                res = refine_gamma_numpy(e, logw, tau, gamma_prev, hi, gamma_prev * 1.5, tol, maxiter)
            else:
                res = solve_gamma_numpy(e, logw, tau, -1.0, tol, maxiter)
            if res[3] == BRACKET_NOT_FOUND:
                continue
            g = res[0]
            gamma_prev = g
            z = logw - e / g
            q = np.exp(z - z.max())
            q /= q.sum()
            tv[s, j] = 0.5 * np.abs(q - target).sum()
            gam[s, j] = g
    return tv, gam


# ---------------------------------------------------------------------------
# Direct O(N*M) energy: I(x_i) = sum_j p_j * l_alpha(x_i, u_j)
# family codes: 0 squared, 1 log-ratio, 2 linear, 3 abs-deviation, 4 neg-log-density
# For family 4, ax holds ln f_ref(x_i) and bu holds ln f_ref(u_j); for 3, aux is the anchor.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _base_loss(code, x, u, aux, ax, bu):
    if code == 0:
        d = x - u
        return d * d
    if code == 1:
        return math.log(x) - math.log(u)
    if code == 2:
        return x - u
    if code == 3:
        return abs(x - aux) - abs(u - aux)
    return bu - ax


@njit(cache=True)
def energy_direct_numba(code, x, u, p, alpha, aux, lnf_x, lnf_u):
    n = x.shape[0]
    m = u.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            if p[j] == 0.0:
                continue
            val = _base_loss(code, x[i], u[j], aux, lnf_x[i], lnf_u[j])
            if x[i] >= u[j]:
                val *= alpha
            acc += p[j] * val
        out[i] = acc
    return out


def energy_direct_numpy(code, x, u, p, alpha, aux, lnf_x, lnf_u):
    keep = p != 0.0
    u = u[keep]
    p = p[keep]
    lnf_u = lnf_u[keep]
    X = x[:, None]
    U = u[None, :]
    if code == 0:
        L = (X - U) ** 2
    elif code == 1:
        L = np.log(X) - np.log(U)
    elif code == 2:
        L = X - U
    elif code == 3:
        L = np.abs(X - aux) - np.abs(U - aux)
    else:
        L = lnf_u[None, :] - lnf_x[:, None]
    L = np.where(X >= U, alpha * L, L)
    return L @ p


# ---------------------------------------------------------------------------
# Biased preferential attachment growth (Fenwick-tree inverse-CDF sampling).
# One source, compiled or interpreted; both consume the same uniforms.
# ---------------------------------------------------------------------------


def _fenwick_add(tree, i, delta):
    n = tree.shape[0]
    i += 1
    while i <= n:
        tree[i - 1] += delta
        i += i & (-i)


def _fenwick_find(tree, target):
    # smallest index whose prefix sum exceeds target
    n = tree.shape[0]
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt - 1] <= rem:
            pos = nxt
            rem -= tree[nxt - 1]
        step //= 2
    return pos


def _grow_ba(deg, factor_of, m0, u, targets):
    n = deg.shape[0]
    tree = np.zeros(n)
    total = 0.0
    for v in range(m0):
        w = deg[v] * factor_of[v]
        if w != 0.0:
            _fenwick_add(tree, v, w)
            total += w
    for t in range(n - m0):
        new = m0 + t
        v = _fenwick_find(tree, u[t] * total)
        if v >= new:
            v = new - 1
        targets[t] = v
        deg[v] += 1
        deg[new] = 1
        _fenwick_add(tree, v, factor_of[v])
        _fenwick_add(tree, new, factor_of[new])
        total += factor_of[v] + factor_of[new]
    return deg


_fenwick_add_numba = njit(cache=True)(_fenwick_add)
_fenwick_find_numba = njit(cache=True)(_fenwick_find)


@njit(cache=True)
def grow_ba_numba(deg, factor_of, m0, u, targets):
    n = deg.shape[0]
    tree = np.zeros(n)
    total = 0.0
    for v in range(m0):
        w = deg[v] * factor_of[v]
        if w != 0.0:
            _fenwick_add_numba(tree, v, w)
            total += w
    for t in range(n - m0):
        new = m0 + t
        v = _fenwick_find_numba(tree, u[t] * total)
        if v >= new:
            v = new - 1
        targets[t] = v
        deg[v] += 1
        deg[new] = 1
        _fenwick_add_numba(tree, v, factor_of[v])
        _fenwick_add_numba(tree, new, factor_of[new])
        total += factor_of[v] + factor_of[new]
    return deg


grow_ba_numpy = _grow_ba


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _pick(nb, py):
    return nb if _accel.USE_NUMBA else py


def gibbs_stats(e, logw, gamma):
    return _pick(gibbs_stats_numba, gibbs_stats_numpy)(e, logw, float(gamma))


def solve_gamma(e, logw, tau, gamma0=-1.0, tol=1e-12, maxiter=200):
    return _pick(solve_gamma_numba, solve_gamma_numpy)(e, logw, float(tau), float(gamma0), float(tol), int(maxiter))


def scan_tv(energies, logw, taus, target, h_min, h_max, tol=1e-12, maxiter=200):
    fn = _pick(scan_tv_numba, scan_tv_numpy)
    return fn(
        np.ascontiguousarray(energies, dtype=np.float64),
        np.ascontiguousarray(logw, dtype=np.float64),
        np.ascontiguousarray(taus, dtype=np.float64),
        np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(h_min, dtype=np.float64),
        float(h_max),
        float(tol),
        int(maxiter),
    )


def energy_direct(code, x, u, p, alpha, aux, lnf_x, lnf_u):
    return _pick(energy_direct_numba, energy_direct_numpy)(code, x, u, p, float(alpha), float(aux), lnf_x, lnf_u)


def grow_ba(deg, factor_of, m0, u, targets):
    return _pick(grow_ba_numba, grow_ba_numpy)(deg, factor_of, int(m0), u, targets)
