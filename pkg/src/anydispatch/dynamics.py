"""Delay-free Laplacian-gradient allocation dynamics and feasibility bookkeeping.

The protocol moves each node along weighted, nonlinearly mapped differences of
its neighbours' scaled marginal costs::

    dz_i/dt = eta * a_i * sum_j W_ij * g_n(g_l(a_j h_j'(z_j)) - g_l(a_i h_i'(z_i)))

with ``a_i = +1`` for generators and ``-1`` for batteries. Odd maps and a
symmetric ``W`` make ``sum_i a_i dz_i/dt`` vanish term by term, so a feasible
start stays feasible. Discrete runs use explicit Euler, ``z(k+1) = z(k) +
eta_tau * rhs``; box limits only enter through the cost penalties.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .costs import Cost, box_of, pack_costs
from .graph import Network
from .kernels.codes import STATUS_NAMES
from .nonlin import NonlinearMap

log = logging.getLogger(__name__)

IDENTITY = NonlinearMap.identity()


class NodeRole(enum.IntEnum):
    GENERATOR = 1
    BATTERY = -1


class InitError(ValueError):
    """The demand cannot be met inside the node boxes, or a given start is infeasible."""


def role_signs(roles) -> np.ndarray:
    a = np.asarray([int(r) for r in roles], dtype=float)
    if not np.all(np.abs(a) == 1):
        raise ValueError("node roles must be +1 (generator) or -1 (battery)")
    return a


@dataclass(frozen=True)
class Problem:
    """Network, per-node costs and roles, and the demand ``b``."""

    net: Network
    costs: tuple
    roles: np.ndarray
    demand: float
    packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "roles", role_signs(self.roles))
        n = self.net.n
        if len(self.costs) != n or self.roles.shape[0] != n:
            raise ValueError(
                f"node count mismatch: network {n}, costs {len(self.costs)}, roles {self.roles.shape[0]}")
        object.__setattr__(self, "packed", pack_costs(self.costs))

    @property
    def n(self) -> int:
        return self.net.n

    def gradients(self, z) -> np.ndarray:
        return kernels.grad_array(self.packed, np.asarray(z, float))

    def scaled_gradients(self, z) -> np.ndarray:
        return self.roles * self.gradients(z)

    def total_cost(self, z) -> float:
        return float(np.sum(kernels.value_array(self.packed, np.asarray(z, float))))

    def feasibility_gap(self, z) -> float:
        return float(np.dot(self.roles, z) - self.demand)


@dataclass(frozen=True)
class SimState:
    z: np.ndarray
    k: int = 0
    unstable: bool = False


@dataclass(frozen=True)
class StepReport:
    residual: float
    feasibility_gap: float
    gradient_spread: float


@dataclass(frozen=True)
class Termination:
    tol_g: float = 1e-6
    tol_r: Optional[float] = None
    k_max: int = 100_000
    guard_factor: float = 1e6

    def guard(self, demand, z0) -> float:
        return self.guard_factor * max(abs(demand), float(np.max(np.abs(z0))))


@dataclass
class Trajectory:
    """Per-iteration metric series of one run; row ``k`` describes ``z(k)``."""

    residual: np.ndarray
    feas_gap: np.ndarray
    grad_spread: np.ndarray
    zabs: np.ndarray
    states: Optional[np.ndarray]
    stop: str
    eta: float
    tau_bar: int = 0
    delay_mode: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.residual) - 1

    @property
    def max_abs_z(self) -> float:
        return float(np.max(self.zabs))

    def reports(self):
        for r, g, s in zip(self.residual, self.feas_gap, self.grad_spread):
            yield StepReport(float(r), float(g), float(s))


def feasible_init(roles, b: float, boxes: Optional[Sequence] = None,
                  mode: str = "equal_surplus", z: Optional[Sequence[float]] = None) -> np.ndarray:
    """A start with ``sum_i a_i z_i = b`` inside every box.

    ``mode="explicit"`` validates ``z``. ``"equal_surplus"`` places every node at
    the same fraction ``t`` of its box, generators measured up from the lower
    end and batteries down from the upper end, then fixes rounding on the last
    node. Without boxes, generators split ``b`` equally and batteries start at 0.
    """
    a = role_signs(roles)
    n = a.shape[0]
    if boxes is not None:
        lo = np.array([bx[0] if bx is not None else -np.inf for bx in boxes], float)
        hi = np.array([bx[1] if bx is not None else np.inf for bx in boxes], float)
        if lo.shape[0] != n:
            raise InitError(f"{len(boxes)} boxes for {n} nodes")
        gen = a > 0
        cap_hi = hi[gen].sum() - lo[~gen].sum()
        cap_lo = lo[gen].sum() - hi[~gen].sum()
        if not cap_lo <= b <= cap_hi:
            raise InitError(f"demand {b} outside achievable range [{cap_lo}, {cap_hi}]")
    if mode == "explicit":
        if z is None:
            raise InitError("explicit initialization needs a state vector")
        z0 = np.asarray(z, dtype=float)
        if z0.shape != (n,):
            raise InitError(f"initial state has {z0.size} entries for {n} nodes")
        gap = float(np.dot(a, z0) - b)
        if abs(gap) > 1e-9 * max(1.0, abs(b)):
            raise InitError(f"initial state is infeasible: sum a_i z_i - b = {gap:.6g}")
        if boxes is not None and (np.any(z0 < lo) or np.any(z0 > hi)):
            raise InitError("initial state violates a box constraint")
        return z0
    if mode != "equal_surplus":
        raise InitError(f"unknown initialization mode {mode!r}")
    if boxes is None or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        if not np.any(a > 0):
            raise InitError("equal split needs at least one generator")
        z0 = np.where(a > 0, b / np.count_nonzero(a > 0), 0.0)
    else:
        width = hi - lo
        t = (b - lo[gen].sum() + hi[~gen].sum()) / width.sum()
        z0 = np.where(gen, lo + t * width, hi - t * width)
    last = int(np.flatnonzero(a > 0)[-1]) if np.any(a > 0) else n - 1
    z0[last] += a[last] * (b - np.dot(a, z0))
    return z0


def protocol_rhs(z, problem: Problem, g_n: NonlinearMap = IDENTITY,
                 g_l: NonlinearMap = IDENTITY, eta: float = 1.0) -> np.ndarray:
    """Right-hand side of the continuous-time protocol at state ``z``."""
    indptr, indices, weights, _ = problem.net.csr()
    return kernels.rhs_sync(np.asarray(z, float), indptr, indices, weights, problem.roles,
                            problem.packed, *g_n.packed(), *g_l.packed(), float(eta))


def step_euler(state: SimState, problem: Problem, g_n: NonlinearMap = IDENTITY,
               g_l: NonlinearMap = IDENTITY, eta_tau: float = 1.0) -> SimState:
    """One explicit Euler step; a non-finite result freezes the state and flags it."""
    if state.unstable:
        return state
    z = state.z + protocol_rhs(state.z, problem, g_n, g_l, eta_tau)
    if not np.all(np.isfinite(z)):
        return replace(state, unstable=True)
    return SimState(z=z, k=state.k + 1)


def momentum_baseline_step(state: SimState, z_prev: Optional[np.ndarray], beta_bar: float,
                           problem: Problem, eta_tau: float) -> SimState:
    """Linear Euler step plus a heavy-ball term ``beta_bar * (z(k) - z(k-1))``.

    A simplified stand-in for an accelerated linear protocol, not a
    reproduction of any particular published method. With no history
    (``z_prev is None`` or ``k == 0``) it is a plain Euler step.
    """
    nxt = step_euler(state, problem, IDENTITY, IDENTITY, eta_tau)
    if nxt.unstable or beta_bar == 0.0 or z_prev is None or state.k == 0:
        return nxt
    z = nxt.z + beta_bar * (state.z - z_prev)
    if not np.all(np.isfinite(z)):
        return replace(state, unstable=True)
    return SimState(z=z, k=nxt.k)


def _unpack(out, eta, record, **extra) -> Trajectory:
    _, status, res, gap, spread, zabs, states = out
    return Trajectory(residual=res, feas_gap=gap, grad_spread=spread, zabs=zabs,
                      states=states if record else None, stop=STATUS_NAMES[status],
                      eta=float(eta), **extra)


def _oracle_z(problem: Problem, oracle):
    if oracle is None:
        from .analysis import solve_centralized
        oracle = solve_centralized(problem)
    return np.asarray(oracle.z_star, float)


def run_to_convergence(problem: Problem, z0, eta_tau: float, g_n: NonlinearMap = IDENTITY,
                       g_l: NonlinearMap = IDENTITY, termination: Termination = Termination(),
                       oracle=None, momentum: float = 0.0, record: bool = False) -> Trajectory:
    """Iterate Euler steps until the gradient spread (or residual) tolerance,
    the divergence guard, or the iteration budget stops the run.

    ``oracle`` supplies ``z_star`` for the residual series and is solved when
    omitted. ``momentum > 0`` switches to the heavy-ball baseline, which only
    accepts identity maps.
    """
    z0 = np.asarray(z0, dtype=float)
    if momentum and not (g_n.is_identity and g_l.is_identity):
        raise ValueError("momentum baseline is defined for identity maps only")
    zstar = _oracle_z(problem, oracle)
    indptr, indices, weights, _ = problem.net.csr()
    tol_r = -np.inf if termination.tol_r is None else float(termination.tol_r)
    out = kernels.run_sync(
        z0, indptr, indices, weights, problem.roles, problem.packed,
        *g_n.packed(), *g_l.packed(),
        float(eta_tau), float(momentum), float(problem.demand), zstar,
        float(termination.tol_g), tol_r, int(termination.k_max),
        termination.guard(problem.demand, z0), bool(record))
    return _unpack(out, eta_tau, record)


def box_list(costs):
    return [box_of(c) for c in costs]
