"""Per-node convex cost functions and smooth box-constraint penalties.

Every cost packs into one row ``(gamma, beta, alpha, lo, hi, eps, code, sigma)``
consumed by the simulation kernels; the methods here evaluate through the same
packed form so the kernels and the public API cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import kernels
from .graph import AnalysisError
from .kernels.codes import PEN_NONE, PEN_POWER, PEN_SOFTPLUS

CURVATURE_MARGIN = 0.05
PENALTY_KINDS = {"power": PEN_POWER, "softplus": PEN_SOFTPLUS}


class CostError(ValueError):
    pass


class _PackedCost:
    def pack(self) -> np.ndarray:
        raise NotImplementedError

    def value(self, z):
        return _scalar_or_array(kernels.value_array(self.pack(), z), z)

    def gradient(self, z):
        return _scalar_or_array(kernels.grad_array(self.pack(), z), z)

    def curvature(self, z):
        """Second derivative; one-sided (right) value at penalty kinks."""
        return _scalar_or_array(kernels.curvature_array(self.pack(), z), z)


def _scalar_or_array(out, z):
    return float(np.asarray(out).reshape(-1)[0]) if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class QuadraticCost(_PackedCost):
    """``gamma z^2 + beta z + alpha`` with ``gamma > 0``."""

    gamma: float
    beta: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise CostError(f"quadratic cost needs finite gamma > 0, got {self.gamma}")
        if not (math.isfinite(self.beta) and math.isfinite(self.alpha)):
            raise CostError("cost coefficients must be finite")

    def pack(self):
        return np.array([self.gamma, self.beta, self.alpha, -np.inf, np.inf, 0.0, PEN_NONE, 1.0])


@dataclass(frozen=True)
class LinearCost(_PackedCost):
    """``beta z + alpha``, plus an optional ``reg * z^2`` regularizer.

    With ``reg == 0`` the cost is not strictly convex; the centralized oracle
    and the step-size bound then need penalty curvature or a positive ``reg``.
    """

    beta: float
    alpha: float = 0.0
    reg: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.alpha)):
            raise CostError("cost coefficients must be finite")
        if not (self.reg >= 0 and math.isfinite(self.reg)):
            raise CostError(f"regularizer must be finite and >= 0, got {self.reg}")

    def pack(self):
        return np.array([self.reg, self.beta, self.alpha, -np.inf, np.inf, 0.0, PEN_NONE, 1.0])


@dataclass(frozen=True)
class PenalizedCost(_PackedCost):
    """Base cost plus ``epsilon * ([z - d_hi]^+ + [d_lo - z]^+)``."""

    base: Union[QuadraticCost, LinearCost]
    d_lo: float
    d_hi: float
    epsilon: float
    penalty_kind: str = "power"
    sigma: float = 2.0

    def __post_init__(self):
        if not isinstance(self.base, (QuadraticCost, LinearCost)):
            raise CostError(f"unsupported base cost {type(self.base).__name__}")
        if not self.d_lo < self.d_hi:
            raise CostError(f"box needs d_lo < d_hi, got [{self.d_lo}, {self.d_hi}]")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise CostError(f"penalty weight must be finite and >= 0, got {self.epsilon}")
        if self.penalty_kind not in PENALTY_KINDS:
            raise CostError(f"penalty kind must be one of {sorted(PENALTY_KINDS)}")
        if self.penalty_kind == "power" and not self.sigma >= 2:
            raise CostError(f"power penalty needs sigma >= 2 for a C1 cost, got {self.sigma}")
        if self.penalty_kind == "softplus" and not self.sigma > 0:
            raise CostError(f"softplus penalty needs sigma > 0, got {self.sigma}")

    @property
    def box(self) -> tuple[float, float]:
        return (self.d_lo, self.d_hi)

    def pack(self):
        row = self.base.pack()
        row[3:8] = [self.d_lo, self.d_hi, self.epsilon,
                    PENALTY_KINDS[self.penalty_kind], self.sigma]
        return row


Cost = Union[QuadraticCost, LinearCost, PenalizedCost]


@dataclass(frozen=True)
class CurvatureBounds:
    """``2v <= h'' <= 2u`` on a range, widened by the safety margin."""

    v: float
    u: float

    @property
    def strictly_convex(self) -> bool:
        return self.v > 0


def pack_costs(costs) -> np.ndarray:
    return np.vstack([c.pack() for c in costs])


def penalty_plus(u, kind: str = "power", sigma: float = 2.0):
    """``max(u, 0)^sigma`` (power) or ``log(1 + exp(sigma u)) / sigma`` (softplus)."""
    if kind not in PENALTY_KINDS:
        raise CostError(f"penalty kind must be one of {sorted(PENALTY_KINDS)}")
    return _scalar_or_array(kernels.penalty_array(PENALTY_KINDS[kind], sigma, u), u)


def cost_value(c: Cost, z):
    return c.value(z)


def cost_gradient(c: Cost, z):
    return c.gradient(z)


def box_of(c: Cost):
    return c.box if isinstance(c, PenalizedCost) else None


def curvature_bounds(c: Cost, zrange, margin: float = CURVATURE_MARGIN,
                     points: int = 10_000) -> CurvatureBounds:
    """Scan ``h''`` over ``zrange`` and return margin-widened half-curvature bounds.

    Penalty kinks (box ends) are added to the grid because the power-2 penalty
    jumps there and softplus peaks there.
    """
    z_min, z_max = map(float, zrange)
    if not z_min < z_max:
        raise CostError(f"curvature range needs z_min < z_max, got {zrange}")
    grid = np.linspace(z_min, z_max, points)
    if isinstance(c, PenalizedCost):
        extra = [x for x in c.box if z_min <= x <= z_max]
        grid = np.concatenate([grid, extra])
    h2 = np.asarray(kernels.curvature_array(c.pack(), grid))
    if not np.all(np.isfinite(h2)):
        raise AnalysisError("non-finite curvature on range")
    if h2.min() < 0:
        raise AnalysisError(f"negative curvature {h2.min():.3e}: cost is not convex on range")
    u = float(0.5 * h2.max() * (1.0 + margin))
    v = float(max(0.0, 0.5 * h2.min() * (1.0 - margin)))
    return CurvatureBounds(v=v, u=u)
