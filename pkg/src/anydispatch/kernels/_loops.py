"""Scalar-loop kernels, compiled with numba when available.

Packed layouts shared with ``_vector``:

* cost rows ``cp[i] = (gamma, beta, alpha, lo, hi, eps, penalty_code, sigma)``
* maps ``(kind, p0, p1, xs, ys)`` with kind codes from :mod:`.codes`
* graphs in CSR form ``(indptr, indices, weights)``; ``link_of[e]`` gives the
  undirected link id of directed entry ``e``.

The update loops accumulate neighbour terms per node in CSR order and, for the
delayed protocol, lag-major order; ``_vector`` uses the same orderings so the
two backends agree to the last bit on identity maps and pure quadratics.
"""

import math

import numpy as np

from .._accel import njit
from .codes import (
    MAP_IDENTITY,
    MAP_LOGQ,
    MAP_SATURATION,
    MAP_SGN,
    PEN_POWER,
    PEN_SOFTPLUS,
    ST_BUDGET,
    ST_CONVERGED,
    ST_UNSTABLE,
)


@njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _softplus(x, sigma):
    # (1/sigma) log(1 + exp(sigma x)) without overflow
    t = sigma * x
    return (max(t, 0.0) + math.log1p(math.exp(-abs(t)))) / sigma


@njit(cache=True, nogil=True)
def map_scalar(kind, p0, p1, xs, ys, u):
    if kind == MAP_IDENTITY:
        return u
    if u == 0.0:
        return 0.0
    a = abs(u)
    s = 1.0 if u > 0.0 else -1.0
    if kind == MAP_SATURATION:
        return s * min(a, p0)
    if kind == MAP_LOGQ:
        lr = math.log(p0)
        return s * math.exp(lr * np.rint(math.log(a) / lr))
    if kind == MAP_SGN:
        return s * (a ** p0 + a ** p1)
    # piecewise-linear table on u >= 0, extended as an odd function
    return s * np.interp(a, xs, ys)


@njit(cache=True, nogil=True)
def penalty_scalar(code, sigma, x):
    if code == PEN_POWER:
        if x <= 0.0:
            return 0.0
        return x * x if sigma == 2.0 else x ** sigma  # exact square, same as the numpy path
    if code == PEN_SOFTPLUS:
        return _softplus(x, sigma)
    return 0.0


@njit(cache=True, nogil=True)
def dpenalty_scalar(code, sigma, x):
    if code == PEN_POWER:
        if x <= 0.0:
            return 0.0
        return 2.0 * x if sigma == 2.0 else sigma * x ** (sigma - 1.0)
    if code == PEN_SOFTPLUS:
        return _sigmoid(sigma * x)
    return 0.0


@njit(cache=True, nogil=True)
def grad_scalar(c, z):
    g = 2.0 * c[0] * z + c[1]
    code = int(c[6])
    if code != 0 and c[5] != 0.0:
        g += c[5] * (dpenalty_scalar(code, c[7], z - c[4])
                     - dpenalty_scalar(code, c[7], c[3] - z))
    return g


@njit(cache=True, nogil=True)
def delta_scalar(c, z, zr):
    """h(z) - h(zr), formed from differences so it stays accurate near zr."""
    dz = z - zr
    d = c[0] * dz * (z + zr) + c[1] * dz
    code = int(c[6])
    if code != 0 and c[5] != 0.0:
        d += c[5] * ((penalty_scalar(code, c[7], z - c[4])
                      - penalty_scalar(code, c[7], zr - c[4]))
                     + (penalty_scalar(code, c[7], c[3] - z)
                        - penalty_scalar(code, c[7], c[3] - zr)))
    return d


@njit(cache=True, nogil=True)
def _pen_gap(code, sigma, u, us):
    return (penalty_scalar(code, sigma, u) - penalty_scalar(code, sigma, us)
            - dpenalty_scalar(code, sigma, us) * (u - us))


@njit(cache=True, nogil=True)
def excess_scalar(c, z, zs):
    """h(z) - h(zs) - h'(zs) (z - zs): nonnegative, exact to rounding near zs."""
    dz = z - zs
    d = c[0] * dz * dz
    code = int(c[6])
    if code != 0 and c[5] != 0.0:
        d += c[5] * (_pen_gap(code, c[7], z - c[4], zs - c[4])
                     + _pen_gap(code, c[7], c[3] - z, c[3] - zs))
    return d


@njit(cache=True, nogil=True)
def _metrics(z, roles, cp, b, zstar, x):
    """Fill ``x`` with scaled gradients; return (residual, gap, spread, zabs)."""
    n = z.shape[0]
    res = 0.0
    gap = 0.0
    zabs = 0.0
    lo = math.inf
    hi = -math.inf
    for i in range(n):
        xi = roles[i] * grad_scalar(cp[i], z[i])
        x[i] = xi
        if xi < lo:
            lo = xi
        if xi > hi:
            hi = xi
        res += excess_scalar(cp[i], z[i], zstar[i])
        gap += roles[i] * z[i]
        a = abs(z[i])
        if a > zabs or a != a:
            zabs = a
    return res, gap - b, hi - lo, zabs


@njit(cache=True, nogil=True)
def rhs_sync(z, indptr, indices, weights, roles, cp,
             gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
             gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, eta):
    n = z.shape[0]
    phi = np.empty(n)
    for i in range(n):
        phi[i] = map_scalar(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys,
                            roles[i] * grad_scalar(cp[i], z[i]))
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            acc += weights[e] * map_scalar(gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
                                           phi[j] - phi[i])
        out[i] = eta * roles[i] * acc
    return out


@njit(cache=True, nogil=True)
def run_sync(z0, indptr, indices, weights, roles, cp,
             gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
             gl_kind, gl_p0, gl_p1, gl_xs, gl_ys,
             eta, beta_bar, b, zstar, tol_g, tol_r, k_max, guard, record):
    n = z0.shape[0]
    res = np.empty(k_max + 1)
    gap = np.empty(k_max + 1)
    spread = np.empty(k_max + 1)
    zabs = np.empty(k_max + 1)
    states = np.empty((k_max + 1 if record else 0, n))
    z = z0.copy()
    zprev = z0.copy()
    znew = np.empty(n)
    x = np.empty(n)
    phi = np.empty(n)
    status = ST_BUDGET
    k = 0
    while True:
        r_k, g_k, s_k, a_k = _metrics(z, roles, cp, b, zstar, x)
        res[k] = r_k
        gap[k] = g_k
        spread[k] = s_k
        zabs[k] = a_k
        if record:
            states[k, :] = z
        if not (a_k <= guard):
            status = ST_UNSTABLE
            break
        if s_k <= tol_g or r_k <= tol_r:
            status = ST_CONVERGED
            break
        if k == k_max:
            break
        for i in range(n):
            phi[i] = map_scalar(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, x[i])
        for i in range(n):
            acc = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                acc += weights[e] * map_scalar(gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
                                               phi[j] - phi[i])
            znew[i] = z[i] + eta * roles[i] * acc
        if beta_bar != 0.0 and k > 0:
            for i in range(n):
                znew[i] = znew[i] + beta_bar * (z[i] - zprev[i])
        for i in range(n):
            zprev[i] = z[i]
            z[i] = znew[i]
        k += 1
    m = k + 1
    return k, status, res[:m], gap[:m], spread[:m], zabs[:m], states[:m] if record else states


@njit(cache=True, nogil=True)
def run_delayed(z0, indptr, indices, weights, link_of, roles, cp,
                gl_kind, gl_p0, gl_p1, gl_xs, gl_ys,
                eta, b, zstar, tol_g, tol_r, k_max, guard, record,
                tau_bar, delays):
    n = z0.shape[0]
    depth = tau_bar + 1
    horizon = delays.shape[0]
    res = np.empty(k_max + 1)
    gap = np.empty(k_max + 1)
    spread = np.empty(k_max + 1)
    zabs = np.empty(k_max + 1)
    states = np.empty((k_max + 1 if record else 0, n))
    hist = np.empty((depth, n))
    z = z0.copy()
    znew = np.empty(n)
    x = np.empty(n)
    status = ST_BUDGET
    k = 0
    while True:
        r_k, g_k, s_k, a_k = _metrics(z, roles, cp, b, zstar, x)
        res[k] = r_k
        gap[k] = g_k
        spread[k] = s_k
        zabs[k] = a_k
        if record:
            states[k, :] = z
        if not (a_k <= guard):
            status = ST_UNSTABLE
            break
        if s_k <= tol_g or r_k <= tol_r:
            status = ST_CONVERGED
            break
        if k == k_max:
            break
        slot = k % depth
        for i in range(n):
            hist[slot, i] = map_scalar(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, x[i])
        if k == 0:
            # pre-start slots carry the k=0 message
            for r in range(1, depth):
                hist[r, :] = hist[0, :]
        for i in range(n):
            acc = 0.0
            for r in range(depth):
                s = k - r
                row = s if s > 0 else 0
                if row >= horizon:
                    row = horizon - 1
                h = hist[s % depth]
                for e in range(indptr[i], indptr[i + 1]):
                    if delays[row, link_of[e]] == r:
                        j = indices[e]
                        acc += weights[e] * (h[j] - h[i])
            znew[i] = z[i] + eta * roles[i] * acc
        for i in range(n):
            z[i] = znew[i]
        k += 1
    m = k + 1
    return k, status, res[:m], gap[:m], spread[:m], zabs[:m], states[:m] if record else states
