"""Sign-preserving odd scalar maps applied on nodes or links, and their sector bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import AnalysisError
from .kernels.codes import MAP_IDENTITY, MAP_LOGQ, MAP_SATURATION, MAP_SGN, MAP_TABLE

KIND_CODES = {
    "identity": MAP_IDENTITY,
    "saturation": MAP_SATURATION,
    "log_quantizer": MAP_LOGQ,
    "sgn_composite": MAP_SGN,
    "table": MAP_TABLE,
}
_EMPTY = np.zeros(0)


class MapError(ValueError):
    pass


class SectorViolation(AnalysisError):
    """The map has no positive lower sector slope on the requested range."""


@dataclass(frozen=True)
class NonlinearMap:
    """An odd map ``g`` with ``u * g(u) > 0`` for ``u != 0``.

    Parameters by kind: ``saturation(limit)``, ``log_quantizer(rho)``,
    ``sgn_composite(mu1, mu2)`` (``sgn^mu1 + sgn^mu2``), ``table(xs, ys)``
    (piecewise linear on ``u >= 0`` through the origin, flat past the last
    point, mirrored for ``u < 0``).
    """

    kind: str = "identity"
    limit: float = 1.0
    rho: float = 1.2
    mu1: float = 0.5
    mu2: float = 1.1
    xs: tuple = field(default=())
    ys: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise MapError(f"unknown map kind {self.kind!r}; expected one of {sorted(KIND_CODES)}")
        if self.kind == "saturation" and not self.limit > 0:
            raise MapError("saturation limit must be positive")
        if self.kind == "log_quantizer" and not self.rho > 1:
            raise MapError("log quantizer level rho must exceed 1")
        if self.kind == "sgn_composite" and not (self.mu1 > 0 and self.mu2 > 0):
            raise MapError("sgn exponents must be positive")
        object.__setattr__(self, "xs", tuple(float(x) for x in self.xs))
        object.__setattr__(self, "ys", tuple(float(y) for y in self.ys))
        if self.kind == "table":
            xs, ys = np.asarray(self.xs, float), np.asarray(self.ys, float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 1:
                raise MapError("table needs equal-length 1-D xs and ys")
            if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
                raise MapError("table xs must be positive and strictly increasing")
            if np.any(ys <= 0):
                raise MapError("table ys must be positive (sign preservation)")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def saturation(cls, limit):
        return cls("saturation", limit=limit)

    @classmethod
    def log_quantizer(cls, rho=1.2):
        return cls("log_quantizer", rho=rho)

    @classmethod
    def sgn_composite(cls, mu1=0.5, mu2=1.1):
        return cls("sgn_composite", mu1=mu1, mu2=mu2)

    @classmethod
    def table(cls, xs, ys):
        return cls("table", xs=tuple(map(float, xs)), ys=tuple(map(float, ys)))

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def packed(self):
        """``(kind, p0, p1, xs, ys)`` for the kernels."""
        code = KIND_CODES[self.kind]
        if self.kind == "saturation":
            return code, float(self.limit), 0.0, _EMPTY, _EMPTY
        if self.kind == "log_quantizer":
            return code, float(self.rho), 0.0, _EMPTY, _EMPTY
        if self.kind == "sgn_composite":
            return code, float(self.mu1), float(self.mu2), _EMPTY, _EMPTY
        if self.kind == "table":
            xs = np.concatenate([[0.0], self.xs])
            ys = np.concatenate([[0.0], self.ys])
            return code, 0.0, 0.0, xs, ys
        return code, 0.0, 0.0, _EMPTY, _EMPTY

    def __call__(self, u):
        out = kernels.map_array(*self.packed(), u)
        return float(out) if np.ndim(u) == 0 else out

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "saturation":
            d["limit"] = self.limit
        elif self.kind == "log_quantizer":
            d["rho"] = self.rho
        elif self.kind == "sgn_composite":
            d.update(mu1=self.mu1, mu2=self.mu2)
        elif self.kind == "table":
            d.update(xs=list(self.xs), ys=list(self.ys))
        return d


@dataclass(frozen=True)
class SectorBounds:
    kappa: float
    Kappa: float
    radius: float

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.Kappa)


def apply(g: NonlinearMap, u):
    return g(u)


def sgn_mu(u, mu):
    """``sign(u) |u|^mu``, zero at zero."""
    a = np.abs(np.asarray(u, dtype=float))
    out = np.sign(u) * a ** mu
    return float(out) if np.ndim(u) == 0 else out


def _scan_ratio(g: NonlinearMap, r: float) -> tuple[float, float]:
    # geometric grid resolves behaviour near 0, linear grid the bulk of (0, r]
    grid = np.unique(np.concatenate([np.geomspace(r * 1e-9, r, 4001),
                                     np.linspace(r / 4000, r, 4000)]))
    ratio = g(grid) / grid
    return float(ratio.min()), float(ratio.max())


def sector_bounds(g: NonlinearMap, r: float) -> SectorBounds:
    """Bounds ``kappa <= g(u)/u <= Kappa`` over ``0 < |u| <= r``.

    Closed forms where the kind allows, otherwise a dense grid scan. An
    unbounded upper slope is reported as ``Kappa = inf``.
    """
    if not r > 0:
        raise MapError("sector radius must be positive")
    if g.kind == "identity":
        kappa, Kappa = 1.0, 1.0
    elif g.kind == "saturation":
        kappa, Kappa = min(1.0, g.limit / r), 1.0
    elif g.kind == "log_quantizer":
        # g(u)/u = rho^(round(t) - t), t = log_rho |u|; (0, r] spans every period
        kappa, Kappa = g.rho ** -0.5, g.rho ** 0.5
    elif g.kind == "sgn_composite":
        kappa, Kappa = _sgn_sector(g.mu1, g.mu2, r)
    else:
        lo, hi = _scan_ratio(g, r)
        knots = np.asarray([x for x in g.xs if x <= r] + [r])
        kr = g(knots) / knots
        kappa, Kappa = min(lo, float(kr.min())), max(hi, float(kr.max()))
    if not kappa > 0:
        raise SectorViolation(f"{g.kind} map has lower sector slope {kappa:g} <= 0 on (0, {r:g}]")
    return SectorBounds(kappa=kappa, Kappa=Kappa, radius=r)


def _sgn_sector(mu1, mu2, r):
    # g(u)/u = t^a + t^b with t = |u|
    a, b = mu1 - 1.0, mu2 - 1.0
    vals = [r ** a + r ** b]
    if a * b < 0:
        t_star = (-a / b) ** (1.0 / (b - a))
        if t_star <= r:
            vals.append(t_star ** a + t_star ** b)
    lo_exp, hi_exp = min(a, b), max(a, b)
    if lo_exp < 0:
        at_zero = math.inf
    elif lo_exp == 0:
        at_zero = 1.0 if hi_exp > 0 else 2.0
    else:
        at_zero = 0.0
    vals.append(at_zero)
    return min(vals), max(vals)


def slope_bounds(g: NonlinearMap, r: float) -> tuple[float, float]:
    """Bounds on ``(g(x) - g(y)) / (x - y)`` over ``x != y`` in ``[-r, r]``.

    Stronger than the sector bounds: the Laplacian quadratic-form bounds with
    a nonlinear map need these incremental slopes. Jump maps (the log quantizer)
    and sgn maps with an exponent below 1 report an infinite upper slope.
    """
    if not r > 0:
        raise MapError("slope radius must be positive")
    if g.kind == "identity":
        return 1.0, 1.0
    if g.kind == "saturation":
        return (0.0 if r > g.limit else 1.0), 1.0
    if g.kind == "log_quantizer":
        return 0.0, math.inf
    if g.kind == "sgn_composite":
        # derivative mu1 t^(mu1-1) + mu2 t^(mu2-1), scanned on [0, r]
        grid = np.concatenate([[0.0], np.geomspace(r * 1e-9, r, 4001)])
        with np.errstate(divide="ignore"):
            d = g.mu1 * grid ** (g.mu1 - 1.0) + g.mu2 * grid ** (g.mu2 - 1.0)
        return float(np.min(d)), float(np.max(d))
    xs = np.concatenate([[0.0], g.xs])
    ys = np.concatenate([[0.0], g.ys])
    slopes = np.diff(ys) / np.diff(xs)
    lo, hi = float(slopes.min()), float(slopes.max())
    if r > g.xs[-1]:
        lo = 0.0
    return lo, hi
