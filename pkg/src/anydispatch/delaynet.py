"""Bounded, symmetric link delays and the delay-tolerant discrete protocol.

Message model: at step ``s`` node ``i`` sends ``g_l(a_i h_i'(z_i(s)))``; the
link delay ``tau_ij(s)`` decides arrival at ``s + tau_ij(s)``. At step ``k``
node ``i`` adds, for each message from ``j`` that arrives now with lag ``r``,
``W_ij * (phi_j(k - r) - phi_i(k - r))``, pairing it with its own value from
the same send step. Several arrivals on one link in one step all count; a link
with no arrival contributes nothing. Delays are symmetric, so each pair term
cancels against its mirror and feasibility is kept exactly.

Before the start, nodes are taken to have sent their ``k = 0`` value under the
``k = 0`` delay of the link: both the history and the schedule clamp negative
send steps to ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .dynamics import IDENTITY, Problem, SimState, Termination, _oracle_z, _unpack
from .graph import Network
from .kernels.codes import ST_BUDGET, STATUS_NAMES
from .nonlin import NonlinearMap

MODES = ("time_varying", "time_invariant")
_BLOCK = 4096
_FIRST_HORIZON = 1 << 16
_INVARIANT_TAG = 2 ** 31 - 1


@dataclass(frozen=True)
class DelaySchedule:
    """Per-link integer delays in ``{0, ..., tau_bar}``, reproducible from the seed.

    Delays are indexed by undirected link (the order of ``Network.edges``), so
    ``tau_ij(k) == tau_ji(k)`` by construction. Time-varying delays for steps
    ``[b*4096, (b+1)*4096)`` come from ``default_rng(SeedSequence([seed,
    tau_bar, b]))``, so any step's delay is independent of how far the table
    has been materialized.
    """

    tau_bar: int
    mode: str
    seed: int
    n_links: int
    links: tuple
    fixed: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.tau_bar < 0:
            raise ValueError("tau_bar must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"delay mode must be one of {MODES}")
        if self.fixed is not None:
            if self.mode != "time_invariant" or len(self.fixed) != self.n_links:
                raise ValueError("fixed delays need time_invariant mode and one value per link")
            if any(not 0 <= d <= self.tau_bar for d in self.fixed):
                raise ValueError(f"fixed delays must lie in [0, {self.tau_bar}]")

    @classmethod
    def constant(cls, net: Network, delays, tau_bar: Optional[int] = None):
        """Time-invariant schedule with the given per-link delays (``Network.edges`` order)."""
        delays = tuple(int(d) for d in np.broadcast_to(delays, (len(net.edges),)))
        links = tuple((i, j) for i, j, _ in net.edges)
        tb = max(delays, default=0) if tau_bar is None else int(tau_bar)
        return cls(tau_bar=tb, mode="time_invariant", seed=0, n_links=len(links),
                   links=links, fixed=delays)

    def _block(self, b: int) -> np.ndarray:
        blk = self._cache.get(b)
        if blk is None:
            ss = np.random.SeedSequence([self.seed, self.tau_bar, b])
            blk = np.random.default_rng(ss).integers(0, self.tau_bar + 1,
                                                     size=(_BLOCK, self.n_links), dtype=np.int64)
            self._cache[b] = blk
        return blk

    def table(self, horizon: int) -> np.ndarray:
        """``(rows, n_links)`` delay table; ``rows`` is 1 for time-invariant schedules."""
        if self.tau_bar == 0:
            return np.zeros((1, self.n_links), dtype=np.int64)
        if self.fixed is not None:
            return np.asarray(self.fixed, dtype=np.int64)[None, :]
        if self.mode == "time_invariant":
            ss = np.random.SeedSequence([self.seed, self.tau_bar, _INVARIANT_TAG])
            row = np.random.default_rng(ss).integers(0, self.tau_bar + 1, size=self.n_links,
                                                     dtype=np.int64)
            return row[None, :]
        nblk = -(-max(horizon, 1) // _BLOCK)
        return np.concatenate([self._block(b) for b in range(nblk)])[:horizon]

    def link_delay(self, k: int, link: int) -> int:
        k = max(int(k), 0)
        if self.tau_bar == 0:
            return 0
        if self.mode == "time_invariant":
            if "inv" not in self._cache:
                self._cache["inv"] = self.table(1)[0]
            return int(self._cache["inv"][link])
        return int(self._block(k // _BLOCK)[k % _BLOCK, link])

    def delay(self, k: int, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        try:
            link = self.links.index(key)
        except ValueError:
            raise KeyError(f"no link between {i} and {j}") from None
        return self.link_delay(k, link)


def sample_schedule(net: Network, tau_bar: int, mode: str = "time_varying",
                    seed: int = 0) -> DelaySchedule:
    links = tuple((i, j) for i, j, _ in net.edges)
    return DelaySchedule(tau_bar=int(tau_bar), mode=mode, seed=int(seed),
                         n_links=len(links), links=links)


def indicator(schedule: DelaySchedule, k: int, i: int, j: int, r: int) -> int:
    """1 iff the message sent on link ``(i, j)`` at step ``k - r`` arrives at ``k``."""
    if not 0 <= r <= schedule.tau_bar:
        raise ValueError(f"lag {r} outside [0, {schedule.tau_bar}]")
    return int(schedule.delay(k - r, i, j) == r)


class GradientHistory:
    """Ring buffer of the last ``tau_bar + 1`` link-mapped scaled gradients per node."""

    def __init__(self, tau_bar: int, n: int):
        self.depth = tau_bar + 1
        self.buf = np.empty((self.depth, n))
        self.k = -1

    def push(self, phi: np.ndarray):
        self.k += 1
        self.buf[self.k % self.depth] = phi
        if self.k == 0:
            self.buf[1:] = phi

    def lagged(self, r: int) -> np.ndarray:
        """Values sent at step ``k - r`` (the ``k = 0`` values before the start)."""
        if not 0 <= r < self.depth:
            raise ValueError(f"lag {r} outside history depth {self.depth}")
        return self.buf[(self.k - r) % self.depth]


def step_delayed(state: SimState, history: GradientHistory, schedule: DelaySchedule,
                 problem: Problem, g_l: NonlinearMap = IDENTITY, eta_tau: float = 1.0) -> SimState:
    """One delayed update; pushes this step's mapped gradients onto ``history``.

    Plain-Python reference loop in the same accumulation order as the kernels.
    """
    if state.unstable:
        return state
    if history.depth != schedule.tau_bar + 1:
        raise ValueError("history depth must equal tau_bar + 1")
    k = state.k
    if history.k != k - 1:
        raise ValueError(f"history is at step {history.k}, state at {k}")
    history.push(g_l(problem.scaled_gradients(state.z)))
    indptr, indices, weights, link_of = problem.net.csr()
    a = problem.roles
    z = state.z.copy()
    for i in range(problem.n):
        acc = 0.0
        for r in range(schedule.tau_bar + 1):
            h = history.lagged(r)
            for e in range(indptr[i], indptr[i + 1]):
                if schedule.link_delay(k - r, link_of[e]) == r:
                    acc += weights[e] * (h[indices[e]] - h[i])
        z[i] = state.z[i] + eta_tau * a[i] * acc
    if not np.all(np.isfinite(z)):
        return replace(state, unstable=True)
    return SimState(z=z, k=k + 1)


def run_delayed(problem: Problem, z0, eta_tau: float, schedule: DelaySchedule,
                g_l: NonlinearMap = IDENTITY, termination: Termination = Termination(),
                oracle=None, record: bool = False):
    """Delayed-protocol counterpart of :func:`dynamics.run_to_convergence`."""
    z0 = np.asarray(z0, dtype=float)
    zstar = _oracle_z(problem, oracle)
    indptr, indices, weights, link_of = problem.net.csr()
    tol_r = -np.inf if termination.tol_r is None else float(termination.tol_r)
    k_max = int(termination.k_max)
    # materialize delays for a short horizon first and rerun longer only if needed;
    # runs are deterministic, so a rerun reproduces the prefix exactly
    horizon = min(k_max, _FIRST_HORIZON)
    while True:
        out = kernels.run_delayed(
            z0, indptr, indices, weights, link_of, problem.roles, problem.packed,
            *g_l.packed(),
            float(eta_tau), float(problem.demand), zstar,
            float(termination.tol_g), tol_r, horizon,
            termination.guard(problem.demand, z0), bool(record),
            int(schedule.tau_bar), schedule.table(horizon + 1))
        traj = _unpack(out, eta_tau, record, tau_bar=schedule.tau_bar, delay_mode=schedule.mode)
        if traj.stop != STATUS_NAMES[ST_BUDGET] or horizon >= k_max:
            return traj
        horizon = min(k_max, 8 * horizon)


def arrivals(schedule: DelaySchedule, k: int, link: int) -> int:
    """Number of messages arriving on ``link`` at step ``k``."""
    return sum(schedule.link_delay(k - r, link) == r for r in range(schedule.tau_bar + 1))
