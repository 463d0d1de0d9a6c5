"""Pure-numpy kernels: one Python-level loop over iterations, vectorized over
nodes and links.

Accumulation uses ``np.bincount`` over CSR-ordered (and, for delays,
lag-major) entries, which adds terms per node in the same sequence as the
scalar loops in ``_loops``.
"""

import numpy as np

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


def map_array(kind, p0, p1, xs, ys, u):
    u = np.asarray(u, dtype=float)
    if kind == MAP_IDENTITY:
        return u.copy()
    a = np.abs(u)
    s = np.sign(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == MAP_SATURATION:
            out = s * np.minimum(a, p0)
        elif kind == MAP_LOGQ:
            lr = np.log(p0)
            out = s * np.exp(lr * np.rint(np.log(a) / lr))
        elif kind == MAP_SGN:
            out = s * (a ** p0 + a ** p1)
        else:
            out = s * np.interp(a, xs, ys)
    return np.where(u == 0.0, 0.0, out)


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def penalty_array(code, sigma, x):
    x = np.asarray(x, dtype=float)
    if code == PEN_POWER:
        xp = np.where(x > 0.0, x, 1.0)
        return np.where(x > 0.0, np.where(sigma == 2.0, xp * xp, xp ** sigma), 0.0)
    if code == PEN_SOFTPLUS:
        t = sigma * x
        return (np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))) / sigma
    return np.zeros_like(x)


def dpenalty_array(code, sigma, x):
    x = np.asarray(x, dtype=float)
    if code == PEN_POWER:
        xp = np.where(x > 0.0, x, 1.0)
        return np.where(x > 0.0, np.where(sigma == 2.0, 2.0 * xp, sigma * xp ** (sigma - 1.0)), 0.0)
    if code == PEN_SOFTPLUS:
        return _sigmoid(sigma * x)
    return np.zeros_like(x)


def d2penalty_array(code, sigma, x):
    x = np.asarray(x, dtype=float)
    if code == PEN_POWER:
        return np.where(x > 0.0, sigma * (sigma - 1.0) * np.where(x > 0.0, x, 1.0) ** (sigma - 2.0),
                        0.0)
    if code == PEN_SOFTPLUS:
        s = _sigmoid(sigma * x)
        return sigma * s * (1.0 - s)
    return np.zeros_like(x)


def _columns(cp):
    cp = np.atleast_2d(np.asarray(cp, dtype=float))
    return tuple(cp[:, c] for c in range(8))


def grad_array(cp, z):
    gamma, beta, _, lo, hi, eps, code, sigma = _columns(cp)
    z = np.asarray(z, dtype=float)
    g = 2.0 * gamma * z + beta
    for c in (PEN_POWER, PEN_SOFTPLUS):
        m = (code == c) & (eps != 0.0)
        if m.any():
            pen = dpenalty_array(c, sigma, z - hi) - dpenalty_array(c, sigma, lo - z)
            g = np.where(m, g + eps * pen, g)
    return g


def value_array(cp, z):
    gamma, beta, alpha, lo, hi, eps, code, sigma = _columns(cp)
    z = np.asarray(z, dtype=float)
    v = gamma * z * z + beta * z + alpha
    for c in (PEN_POWER, PEN_SOFTPLUS):
        m = (code == c) & (eps != 0.0)
        if m.any():
            pen = penalty_array(c, sigma, z - hi) + penalty_array(c, sigma, lo - z)
            v = np.where(m, v + eps * pen, v)
    return v


def curvature_array(cp, z):
    gamma, _, _, lo, hi, eps, code, sigma = _columns(cp)
    z = np.asarray(z, dtype=float)
    h2 = 2.0 * gamma * np.ones_like(z)
    for c in (PEN_POWER, PEN_SOFTPLUS):
        m = (code == c) & (eps != 0.0)
        if m.any():
            pen = d2penalty_array(c, sigma, z - hi) + d2penalty_array(c, sigma, lo - z)
            h2 = np.where(m, h2 + eps * pen, h2)
    return h2


def delta_array(cp, z, zr):
    gamma, beta, _, lo, hi, eps, code, sigma = _columns(cp)
    dz = z - zr
    d = gamma * dz * (z + zr) + beta * dz
    for c in (PEN_POWER, PEN_SOFTPLUS):
        m = (code == c) & (eps != 0.0)
        if m.any():
            pen = ((penalty_array(c, sigma, z - hi) - penalty_array(c, sigma, zr - hi))
                   + (penalty_array(c, sigma, lo - z) - penalty_array(c, sigma, lo - zr)))
            d = np.where(m, d + eps * pen, d)
    return d


def excess_array(cp, z, zs):
    """``h(z) - h(zs) - h'(zs) (z - zs)`` per node."""
    gamma, _, _, lo, hi, eps, code, sigma = _columns(cp)
    dz = z - zs
    d = gamma * dz * dz
    for c in (PEN_POWER, PEN_SOFTPLUS):
        m = (code == c) & (eps != 0.0)
        if m.any():
            def gap(u, us):
                return (penalty_array(c, sigma, u) - penalty_array(c, sigma, us)
                        - dpenalty_array(c, sigma, us) * (u - us))
            d = np.where(m, d + eps * (gap(z - hi, zs - hi) + gap(lo - z, lo - zs)), d)
    return d


def _src(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def _seqsum(v):
    acc = 0.0
    for t in v.tolist():
        acc += t
    return acc


def _metrics(z, roles, cp, b, zstar):
    x = roles * grad_array(cp, z)
    res = _seqsum(excess_array(cp, z, zstar))
    gap = _seqsum(roles * z) - b
    zabs = float(np.max(np.abs(z)))
    if np.isnan(z).any():
        zabs = float("nan")
    return x, res, gap, float(x.max() - x.min()), zabs


def rhs_sync(z, indptr, indices, weights, roles, cp,
             gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
             gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, eta):
    n = z.shape[0]
    src = _src(indptr)
    phi = map_array(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, roles * grad_array(cp, z))
    terms = weights * map_array(gn_kind, gn_p0, gn_p1, gn_xs, gn_ys, phi[indices] - phi[src])
    acc = np.bincount(src, weights=terms, minlength=n)
    return eta * roles * acc


def _alloc(k_max, n, record):
    return (np.empty(k_max + 1), np.empty(k_max + 1), np.empty(k_max + 1),
            np.empty(k_max + 1), np.empty((k_max + 1 if record else 0, n)))


def run_sync(z0, indptr, indices, weights, roles, cp,
             gn_kind, gn_p0, gn_p1, gn_xs, gn_ys,
             gl_kind, gl_p0, gl_p1, gl_xs, gl_ys,
             eta, beta_bar, b, zstar, tol_g, tol_r, k_max, guard, record):
    n = z0.shape[0]
    src = _src(indptr)
    res, gap, spread, zabs, states = _alloc(k_max, n, record)
    z = z0.copy()
    zprev = z0.copy()
    status = ST_BUDGET
    k = 0
    while True:
        x, res[k], gap[k], spread[k], zabs[k] = _metrics(z, roles, cp, b, zstar)
        if record:
            states[k] = z
        if not (zabs[k] <= guard):
            status = ST_UNSTABLE
            break
        if spread[k] <= tol_g or res[k] <= tol_r:
            status = ST_CONVERGED
            break
        if k == k_max:
            break
        phi = map_array(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, x)
        terms = weights * map_array(gn_kind, gn_p0, gn_p1, gn_xs, gn_ys, phi[indices] - phi[src])
        acc = np.bincount(src, weights=terms, minlength=n)
        znew = z + eta * roles * acc
        if beta_bar != 0.0 and k > 0:
            znew = znew + beta_bar * (z - zprev)
        zprev = z
        z = znew
        k += 1
    m = k + 1
    return k, status, res[:m], gap[:m], spread[:m], zabs[:m], states[:m] if record else states


def run_delayed(z0, indptr, indices, weights, link_of, roles, cp,
                gl_kind, gl_p0, gl_p1, gl_xs, gl_ys,
                eta, b, zstar, tol_g, tol_r, k_max, guard, record,
                tau_bar, delays):
    n = z0.shape[0]
    depth = tau_bar + 1
    horizon = delays.shape[0]
    src = _src(indptr)
    ne = src.shape[0]
    # lag-major entry order: all CSR entries for r=0, then r=1, ...; a stable
    # sort by source node keeps that order within each node
    lag = np.repeat(np.arange(depth), ne)
    ent = np.tile(np.arange(ne), depth)
    order = np.argsort(np.tile(src, depth), kind="stable")
    lag, ent = lag[order], ent[order]
    e_src, e_dst, e_w, e_link = src[ent], indices[ent], weights[ent], link_of[ent]
    res, gap, spread, zabs, states = _alloc(k_max, n, record)
    hist = np.empty((depth, n))
    z = z0.copy()
    status = ST_BUDGET
    k = 0
    while True:
        x, res[k], gap[k], spread[k], zabs[k] = _metrics(z, roles, cp, b, zstar)
        if record:
            states[k] = z
        if not (zabs[k] <= guard):
            status = ST_UNSTABLE
            break
        if spread[k] <= tol_g or res[k] <= tol_r:
            status = ST_CONVERGED
            break
        if k == k_max:
            break
        hist[k % depth] = map_array(gl_kind, gl_p0, gl_p1, gl_xs, gl_ys, x)
        if k == 0:
            hist[1:] = hist[0]
        s = k - lag
        rows = np.clip(s, 0, horizon - 1)
        sel = delays[rows, e_link] == lag
        slots = s[sel] % depth
        terms = e_w[sel] * (hist[slots, e_dst[sel]] - hist[slots, e_src[sel]])
        acc = np.bincount(e_src[sel], weights=terms, minlength=n)
        z = z + eta * roles * acc
        k += 1
    m = k + 1
    return k, status, res[:m], gap[:m], spread[:m], zabs[:m], states[:m] if record else states
