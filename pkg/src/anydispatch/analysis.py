"""Step-rate bound, centralized KKT oracle, and run classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .costs import curvature_bounds
from .dynamics import Problem, Trajectory
from .graph import AnalysisError, spectrum
from .kernels.codes import PEN_SOFTPLUS
from .nonlin import NonlinearMap, sector_bounds

OPERATING_MARGIN = 50.0
SAFETY = 0.99


@dataclass(frozen=True)
class StepBoundInputs:
    kappa: float
    Kappa: float
    lambda2: float
    lambdaN: float
    u: float
    tau_bar: int = 0

    def __post_init__(self):
        for name in ("kappa", "Kappa", "lambda2", "lambdaN", "u"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise AnalysisError(f"step bound needs finite positive {name}, got {val}")
        if self.tau_bar < 0:
            raise AnalysisError("tau_bar must be >= 0")
        if self.lambda2 > self.lambdaN * (1 + 1e-12) or self.kappa > self.Kappa * (1 + 1e-12):
            raise AnalysisError("need lambda2 <= lambdaN and kappa <= Kappa")


def step_bound(inp: StepBoundInputs) -> float:
    """``kappa * lambda2 / (u * lambdaN^2 * Kappa^2 * (tau_bar + 1))``."""
    return inp.kappa * inp.lambda2 / (inp.u * inp.lambdaN ** 2 * inp.Kappa ** 2 * (inp.tau_bar + 1))


def operating_range(problem: Problem, z0=None) -> tuple[float, float]:
    """Box hull widened by 50 MW; falls back to the start state and demand."""
    ends = []
    for c in problem.costs:
        box = getattr(c, "box", None)
        if box is not None:
            ends.extend(box)
    if not ends:
        ends = [0.0, abs(problem.demand)]
        if z0 is not None:
            ends.extend(np.asarray(z0, float).tolist())
    return min(ends) - OPERATING_MARGIN, max(ends) + OPERATING_MARGIN


@dataclass(frozen=True)
class BoundReport:
    eta_bar: float
    bound: float
    inputs: StepBoundInputs
    v: float
    zrange: tuple
    grad_radius: float


def bound_for(problem: Problem, g_l: NonlinearMap = NonlinearMap.identity(), tau_bar: int = 0,
              z0=None, zrange=None) -> BoundReport:
    """Evaluate the delay-aware step-rate bound for ``problem`` and link map ``g_l``.

    ``u`` is the largest per-node curvature bound on the operating range and the
    sector bounds of ``g_l`` are taken over the range of scaled gradients seen
    there. Raises :class:`AnalysisError` when ``g_l`` has no finite upper sector
    slope or a cost has zero curvature everywhere.
    """
    zrange = zrange or operating_range(problem, z0)
    spec = spectrum(problem.net)
    curv = [curvature_bounds(c, zrange) for c in problem.costs]
    u = max(cb.u for cb in curv)
    v = min(cb.v for cb in curv)
    grid = np.linspace(zrange[0], zrange[1], 2001)
    r = max(float(np.max(np.abs(c.gradient(grid)))) for c in problem.costs)
    sec = sector_bounds(g_l, r if r > 0 else 1.0)
    if not sec.bounded:
        raise AnalysisError(f"{g_l.kind} link map has unbounded sector slope near 0; "
                            "no guaranteed step rate exists, pass an explicit eta")
    inp = StepBoundInputs(kappa=sec.kappa, Kappa=sec.Kappa, lambda2=spec.lambda2,
                          lambdaN=spec.lambdaN, u=u, tau_bar=tau_bar)
    bound = step_bound(inp)
    return BoundReport(eta_bar=bound * (tau_bar + 1), bound=bound, inputs=inp, v=v,
                       zrange=tuple(zrange), grad_radius=r)


def guaranteed_rate(problem: Problem, g_l: NonlinearMap = NonlinearMap.identity(),
                    tau_bar: int = 0, z0=None) -> float:
    return SAFETY * bound_for(problem, g_l, tau_bar, z0).bound


@dataclass(frozen=True)
class OracleSolution:
    z_star: np.ndarray
    lambda_star: float
    H_star: float

    def kkt_residual(self, problem: Problem) -> float:
        return float(np.max(np.abs(problem.scaled_gradients(self.z_star) - self.lambda_star)))


def _check_strict(cp):
    gamma, eps, code = cp[:, 0], cp[:, 5], cp[:, 6]
    strict = (gamma > 0) | ((code == PEN_SOFTPLUS) & (eps > 0))
    if not np.all(strict):
        bad = np.flatnonzero(~strict).tolist()
        raise AnalysisError(f"nodes {bad} have no strictly convex cost; add a regularizer")


def _solve_nodes(cp, target, lo0, hi0, x0=None, max_iter=200, width=1e-12):
    """Per-node root of ``h_i'(z) = target_i``, bracketed then solved by Newton-bisection."""
    quad = (cp[:, 6] == 0) | (cp[:, 5] == 0)
    z = np.empty_like(target)
    z[quad] = (target[quad] - cp[quad, 1]) / (2.0 * cp[quad, 0])
    idx = np.flatnonzero(~quad)
    if idx.size == 0:
        return z
    sub = cp[idx]
    t = target[idx]
    lo, hi = lo0[idx].copy(), hi0[idx].copy()
    step = np.maximum(hi - lo, 1.0)
    for _ in range(200):
        low_bad = kernels.grad_array(sub, lo) > t
        high_bad = kernels.grad_array(sub, hi) < t
        if not (low_bad.any() or high_bad.any()):
            break
        lo = np.where(low_bad, lo - step, lo)
        hi = np.where(high_bad, hi + step, hi)
        step = step * 2.0
    else:
        raise AnalysisError("could not bracket a node's optimality condition")
    # safeguarded Newton: take the Newton point when it stays inside the bracket
    x = 0.5 * (lo + hi)
    if x0 is not None:
        x = np.where((x0[idx] > lo) & (x0[idx] < hi), x0[idx], x)
    for _ in range(max_iter):
        g = kernels.grad_array(sub, x) - t
        lo = np.where(g < 0, x, lo)
        hi = np.where(g < 0, hi, x)
        if np.all((hi - lo <= width) | (np.abs(g) <= 1e-14 * np.maximum(1.0, np.abs(t)))):
            break
        curv = kernels.curvature_array(sub, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - g / curv
        inside = np.isfinite(nx) & (nx > lo) & (nx < hi)
        x_new = np.where(inside, nx, 0.5 * (lo + hi))
        if np.all(x_new == x):
            break
        x = x_new
    z[idx] = x
    return z


def solve_centralized(problem: Problem, max_iter: int = 200) -> OracleSolution:
    """Minimize the penalized total cost subject to ``sum_i a_i z_i = b``.

    Safeguarded Newton-bisection on the common multiplier ``lam``: each node
    solves ``a_i h_i'(z_i) = lam`` and the outer loop drives the balance gap
    to zero inside a sign-change bracket.
    A final correction moves the residual gap onto the flattest node.
    """
    cp = problem.packed
    a = problem.roles
    b = float(problem.demand)
    _check_strict(cp)
    lo_box = np.where(np.isfinite(cp[:, 3]), cp[:, 3], -abs(b) - 1.0)
    hi_box = np.where(np.isfinite(cp[:, 4]), cp[:, 4], abs(b) + 1.0)

    warm = [None]

    def z_of(lam):
        z = _solve_nodes(cp, a * lam, lo_box, hi_box, warm[0])
        warm[0] = z
        return z

    def gap(lam):
        return float(np.dot(a, z_of(lam)) - b)

    ends = np.concatenate([a * kernels.grad_array(cp, lo_box), a * kernels.grad_array(cp, hi_box)])
    lam_lo, lam_hi = float(ends.min()) - 1.0, float(ends.max()) + 1.0
    width = max(lam_hi - lam_lo, 1.0)
    for _ in range(200):
        g_lo, g_hi = gap(lam_lo), gap(lam_hi)
        if g_lo <= 0 <= g_hi:
            break
        if g_lo > 0:
            lam_lo -= width
        if g_hi < 0:
            lam_hi += width
        width *= 2.0
    else:
        raise AnalysisError("could not bracket the multiplier; demand may be infeasible")
    tol = 1e-10 * min(problem.n, max(1.0, abs(b)))
    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(max_iter):
        z = z_of(lam)
        g = float(np.dot(a, z) - b)
        if abs(g) <= tol:
            break
        if g < 0:
            lam_lo = lam
        else:
            lam_hi = lam
        # d gap / d lam = sum_i 1 / h_i''(z_i); fall back to bisection outside the bracket
        slope = float(np.sum(1.0 / kernels.curvature_array(cp, z)))
        nxt = lam - g / slope if slope > 0 and math.isfinite(slope) else lam_lo
        if not lam_lo < nxt < lam_hi:
            nxt = 0.5 * (lam_lo + lam_hi)
        if nxt == lam or nxt in (lam_lo, lam_hi):
            break
        lam = nxt
    z = z_of(lam)
    g = float(np.dot(a, z) - b)
    h2 = kernels.curvature_array(cp, z)
    j = int(np.argmin(h2))
    z[j] -= a[j] * g
    g = float(np.dot(a, z) - b)
    if not abs(g) <= 1e-10 * problem.n:
        raise AnalysisError(f"oracle balance gap {g:.3e} above tolerance")
    return OracleSolution(z_star=z, lambda_star=float(lam), H_star=problem.total_cost(z))


@dataclass(frozen=True)
class RunSummary:
    verdict: str
    iterations: int
    iters_to_threshold: Optional[int]
    final_residual: float
    final_spread: float
    max_feas_gap: float
    max_abs_z: float


def classify_run(traj: Trajectory, tol_g: float = 1e-6, threshold: float = 0.01,
                 growth: float = 100.0) -> RunSummary:
    """Verdict for a finished run plus speed and feasibility statistics.

    ``unstable``: the run hit the divergence guard, went non-finite, or its
    residual over the final window (the last 5% of steps, at least 10) stayed
    ``growth`` times above the lowest residual seen (floored at ``1e-6`` of the
    initial residual so rounding-level chatter is ignored). Judging the tail
    rather than any single rebound matters for delayed runs, whose residual
    can dip and recover on the way to convergence.
    ``converged``: final spread within ``tol_g`` and final residual no larger
    than the initial one. ``iters_to_threshold`` is the first ``k`` with
    residual at most ``threshold`` times the initial residual.
    """
    res = np.asarray(traj.residual, float)
    r0 = res[0]
    finite = np.all(np.isfinite(res)) and np.all(np.isfinite(traj.zabs))
    floor = max(1e-6 * abs(r0), np.finfo(float).tiny)
    if finite:
        tail = res[-max(10, len(res) // 20):]
        grew = bool(tail.min() > growth * max(res.min(), floor))
    else:
        grew = True
    if traj.stop == "unstable" or not finite or grew:
        verdict = "unstable"
    elif traj.grad_spread[-1] <= tol_g and res[-1] <= r0 + 1e-12 * max(1.0, abs(r0)):
        verdict = "converged"
    else:
        verdict = "budget_exhausted"
    hit = [0] if r0 <= 0 else np.flatnonzero(res <= threshold * r0)
    return RunSummary(
        verdict=verdict,
        iterations=traj.iterations,
        iters_to_threshold=int(hit[0]) if len(hit) else None,
        final_residual=float(res[-1]),
        final_spread=float(traj.grad_spread[-1]),
        max_feas_gap=float(np.nanmax(np.abs(traj.feas_gap))),
        max_abs_z=traj.max_abs_z,
    )

