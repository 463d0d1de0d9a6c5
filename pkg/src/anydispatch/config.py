"""Declarative scenario description, parsed from TOML or a plain dict.

Canonical format (every section but ``demand`` and ``topology`` is optional)::

    name = "demo"
    demand = 700.0                     # b, MW

    [topology]
    kind = "cycle"                     # cycle | k_hop_cycle | edges
    n = 10
    hops = 2                           # k_hop_cycle only
    weight = 1.0
    edges = [[0, 1], [1, 2]]           # edges only

    [nodes]
    generators = 7                     # generators occupy nodes 0..N-1,
    batteries = 3                      # batteries the remaining m nodes
    # roles = [1, 1, -1, ...]          # alternative: explicit +1/-1 signs

    [costs]
    mode = "random"                    # random | explicit
    seed = 1
    gamma = [0.002, 0.008]             # generator draws, uniform ranges
    beta = [2.0, 3.0]
    alpha = [0.0, 100.0]
    battery_beta = [-4.0, -3.0]        # batteries are linear
    battery_alpha = [0.0, 10.0]
    regularizer = 1e-3                 # reg * y^2 on linear costs
    generator_box = [20.0, 90.0]
    battery_box = [0.0, 200.0]
    penalty = "power"                  # power | softplus
    sigma = 2.0
    epsilon = 0.08                     # default 10 * max gamma
    # [[costs.node]]                   # explicit mode: one table per node
    # kind = "quadratic"; gamma = 0.01; beta = 3.0; alpha = 0.0; box = [20, 90]

    [nonlinearity]
    node = { kind = "sgn_composite", mu1 = 0.5, mu2 = 1.1 }
    link = { kind = "identity" }

    [init]
    mode = "equal_surplus"             # equal_surplus | explicit | by_role
    # z = [...]                        # explicit
    # generator = 100.0                # by_role
    # battery = 0.0

    [step]
    eta = "auto"                       # number, or 0.99 x guaranteed bound
    momentum = 0.0                     # heavy-ball stand-in baseline

    [delay]
    tau_bar = 0
    mode = "time_varying"              # time_varying | time_invariant
    seed = 0

    [termination]
    tol_g = 1e-6
    # tol_r = 1e-9
    k_max = 100000
    guard_factor = 1e6

    [output]
    states = true                      # per-node z columns in the metrics CSV
    threshold = 0.01                   # residual fraction for speed counts
    label = ""
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .costs import CostError, LinearCost, PenalizedCost, QuadraticCost
from .delaynet import MODES as DELAY_MODES
from .delaynet import DelaySchedule, sample_schedule
from .dynamics import InitError, Problem, Termination, feasible_init
from .graph import GraphError, Network, build_cycle, build_k_hop_cycle, from_edges
from .nonlin import MapError, NonlinearMap

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid scenario description; the message names the offending key."""


_ALLOWED = {
    "": {"name", "demand", "topology", "nodes", "costs", "nonlinearity", "init",
         "step", "delay", "termination", "output"},
    "topology": {"kind", "n", "hops", "weight", "edges"},
    "nodes": {"generators", "batteries", "roles"},
    "costs": {"mode", "seed", "gamma", "beta", "alpha", "battery_beta", "battery_alpha",
              "regularizer", "generator_box", "battery_box", "penalty", "sigma", "epsilon",
              "node"},
    "costs.node": {"kind", "gamma", "beta", "alpha", "reg", "box", "epsilon", "penalty", "sigma"},
    "nonlinearity": {"node", "link"},
    "map": {"kind", "limit", "rho", "mu1", "mu2", "xs", "ys"},
    "init": {"mode", "z", "generator", "battery"},
    "step": {"eta", "momentum"},
    "delay": {"tau_bar", "mode", "seed"},
    "termination": {"tol_g", "tol_r", "k_max", "guard_factor"},
    "output": {"states", "threshold", "label"},
}

DEFAULT_RANGES = {
    "gamma": (0.002, 0.008),
    "beta": (2.0, 3.0),
    "alpha": (0.0, 100.0),
    "battery_beta": (-4.0, -3.0),
    "battery_alpha": (0.0, 10.0),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario plus the list of keys that were filled by defaults."""

    name: str
    demand: float
    topology: dict
    roles: tuple
    costs: dict
    g_n: NonlinearMap
    g_l: NonlinearMap
    init: dict
    eta: Any
    momentum: float
    delay: Optional[dict]
    termination: Termination
    output: dict
    defaults: tuple = ()
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.roles)

    @property
    def tau_bar(self) -> int:
        return 0 if self.delay is None else int(self.delay["tau_bar"])

    @property
    def label(self) -> str:
        return self.output.get("label") or self.name

    def network(self) -> Network:
        t = self.topology
        if t["kind"] == "cycle":
            return build_cycle(t["n"], t["weight"])
        if t["kind"] == "k_hop_cycle":
            return build_k_hop_cycle(t["n"], t["hops"], t["weight"])
        return from_edges(t["n"], [tuple(e) for e in t["edges"]], t["weight"])

    def problem(self) -> Problem:
        return Problem(self.network(), build_costs(self.costs, self.roles), self.roles, self.demand)

    def initial_state(self, problem: Optional[Problem] = None) -> np.ndarray:
        problem = problem or self.problem()
        boxes = [getattr(c, "box", None) for c in problem.costs]
        if all(bx is None for bx in boxes):
            boxes = None
        ini = self.init
        try:
            if ini["mode"] == "equal_surplus":
                return feasible_init(self.roles, self.demand, boxes)
            if ini["mode"] == "by_role":
                z = np.where(np.asarray(self.roles) > 0, ini["generator"], ini["battery"])
            else:
                z = ini["z"]
            return feasible_init(self.roles, self.demand, boxes, mode="explicit", z=z)
        except InitError as exc:
            raise ConfigError(f"init: {exc}") from None

    def schedule(self, net: Network) -> Optional[DelaySchedule]:
        if self.delay is None:
            return None
        return sample_schedule(net, self.delay["tau_bar"], self.delay["mode"], self.delay["seed"])

    def echo(self) -> dict:
        """Parameters as resolved, for summaries and golden comparisons."""
        return {
            "name": self.name,
            "demand": self.demand,
            "topology": dict(self.topology),
            "roles": list(self.roles),
            "costs": {k: v for k, v in self.costs.items() if k != "node"},
            "g_n": self.g_n.describe(),
            "g_l": self.g_l.describe(),
            "init": dict(self.init),
            "eta": self.eta,
            "momentum": self.momentum,
            "delay": None if self.delay is None else dict(self.delay),
            "termination": {"tol_g": self.termination.tol_g, "tol_r": self.termination.tol_r,
                            "k_max": self.termination.k_max,
                            "guard_factor": self.termination.guard_factor},
            "output": dict(self.output),
            "defaults": list(self.defaults),
        }


class _Reader:
    def __init__(self):
        self.defaults: list[str] = []

    def section(self, data: dict, path: str, allowed_key: Optional[str] = None) -> dict:
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'top level'}: expected a table")
        allowed = _ALLOWED[allowed_key if allowed_key is not None else path]
        for key in data:
            if key not in allowed:
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"unknown key '{where}'")
        return data

    def take(self, data: dict, key: str, default, path: str):
        if key in data:
            return data[key]
        self.defaults.append(f"{path}.{key}" if path else key)
        return default


def _num(val, key, cast=float, positive=False, nonneg=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {val!r}")
    val = cast(val)
    if cast is float and not np.isfinite(val):
        raise ConfigError(f"'{key}' must be finite")
    if positive and not val > 0:
        raise ConfigError(f"'{key}' must be > 0")
    if nonneg and not val >= 0:
        raise ConfigError(f"'{key}' must be >= 0")
    return val


def _pair(val, key):
    if not (isinstance(val, (list, tuple)) and len(val) == 2):
        raise ConfigError(f"'{key}' must be a [low, high] pair")
    lo, hi = (_num(v, key) for v in val)
    if lo > hi:
        raise ConfigError(f"'{key}' needs low <= high")
    return (lo, hi)


def _map(rd: _Reader, data, path) -> NonlinearMap:
    if isinstance(data, str):
        data = {"kind": data}
    rd.section(data, path, "map")
    kw = {k: v for k, v in data.items() if k != "kind"}
    if "xs" in kw:
        kw["xs"] = tuple(map(float, kw["xs"]))
    if "ys" in kw:
        kw["ys"] = tuple(map(float, kw["ys"]))
    try:
        return NonlinearMap(kind=data.get("kind", "identity"), **kw)
    except (MapError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    """Validate a scenario dict (same layout as the TOML form) and fill defaults."""
    raw = copy.deepcopy(data)
    rd = _Reader()
    rd.section(data, "")
    name = str(rd.take(data, "name", "scenario", ""))
    if "demand" not in data:
        raise ConfigError("missing key 'demand'")
    demand = _num(data["demand"], "demand")

    top = rd.section(data.get("topology", {}), "topology")
    kind = top.get("kind")
    if kind not in ("cycle", "k_hop_cycle", "edges"):
        raise ConfigError(f"'topology.kind' must be cycle, k_hop_cycle or edges, got {kind!r}")
    if "n" not in top:
        raise ConfigError("missing key 'topology.n'")
    topology = {"kind": kind, "n": _num(top["n"], "topology.n", int, positive=True),
                "weight": _num(rd.take(top, "weight", 1.0, "topology"), "topology.weight",
                               positive=True)}
    if kind == "k_hop_cycle":
        topology["hops"] = _num(rd.take(top, "hops", 2, "topology"), "topology.hops", int,
                                positive=True)
    if kind == "edges":
        if "edges" not in top:
            raise ConfigError("missing key 'topology.edges'")
        topology["edges"] = [tuple(int(x) for x in e) for e in top["edges"]]
    n = topology["n"]

    nodes = rd.section(data.get("nodes", {}), "nodes")
    if "roles" in nodes:
        if "generators" in nodes or "batteries" in nodes:
            raise ConfigError("'nodes.roles' excludes 'nodes.generators'/'nodes.batteries'")
        roles = tuple(int(r) for r in nodes["roles"])
        if any(r not in (1, -1) for r in roles):
            raise ConfigError("'nodes.roles' entries must be +1 or -1")
    else:
        batteries = _num(rd.take(nodes, "batteries", 0, "nodes"), "nodes.batteries", int,
                         nonneg=True)
        generators = _num(rd.take(nodes, "generators", n - batteries, "nodes"),
                          "nodes.generators", int, nonneg=True)
        roles = (1,) * generators + (-1,) * batteries
    if len(roles) != n:
        raise ConfigError(f"node count mismatch: topology has {n} nodes, roles give {len(roles)}")

    costs = _costs(rd, data.get("costs", {}), roles)

    nl = rd.section(data.get("nonlinearity", {}), "nonlinearity")
    g_n = _map(rd, rd.take(nl, "node", {"kind": "identity"}, "nonlinearity"), "nonlinearity.node")
    g_l = _map(rd, rd.take(nl, "link", {"kind": "identity"}, "nonlinearity"), "nonlinearity.link")

    ini = rd.section(data.get("init", {}), "init")
    init = {"mode": rd.take(ini, "mode", "equal_surplus", "init")}
    if init["mode"] == "explicit":
        if "z" not in ini:
            raise ConfigError("missing key 'init.z' for explicit initialization")
        init["z"] = [_num(v, "init.z") for v in ini["z"]]
        if len(init["z"]) != n:
            raise ConfigError(f"'init.z' has {len(init['z'])} entries for {n} nodes")
    elif init["mode"] == "by_role":
        init["generator"] = _num(rd.take(ini, "generator", 0.0, "init"), "init.generator")
        init["battery"] = _num(rd.take(ini, "battery", 0.0, "init"), "init.battery")
    elif init["mode"] != "equal_surplus":
        raise ConfigError(f"'init.mode' must be equal_surplus, explicit or by_role, "
                          f"got {init['mode']!r}")

    st = rd.section(data.get("step", {}), "step")
    eta = rd.take(st, "eta", "auto", "step")
    if eta != "auto":
        eta = _num(eta, "step.eta", positive=True)
    momentum = _num(rd.take(st, "momentum", 0.0, "step"), "step.momentum", nonneg=True)

    delay = None
    if "delay" in data:
        dl = rd.section(data["delay"], "delay")
        delay = {"tau_bar": _num(rd.take(dl, "tau_bar", 0, "delay"), "delay.tau_bar", int,
                                 nonneg=True),
                 "mode": rd.take(dl, "mode", "time_varying", "delay"),
                 "seed": _num(rd.take(dl, "seed", 0, "delay"), "delay.seed", int, nonneg=True)}
        if delay["mode"] not in DELAY_MODES:
            raise ConfigError(f"'delay.mode' must be one of {DELAY_MODES}")

    tm = rd.section(data.get("termination", {}), "termination")
    tol_r = tm.get("tol_r")
    termination = Termination(
        tol_g=_num(rd.take(tm, "tol_g", 1e-6, "termination"), "termination.tol_g", positive=True),
        tol_r=None if tol_r is None else _num(tol_r, "termination.tol_r"),
        k_max=_num(rd.take(tm, "k_max", 100_000, "termination"), "termination.k_max", int,
                   nonneg=True),
        guard_factor=_num(rd.take(tm, "guard_factor", 1e6, "termination"),
                          "termination.guard_factor", positive=True))

    out = rd.section(data.get("output", {}), "output")
    output = {"states": bool(rd.take(out, "states", True, "output")),
              "threshold": _num(rd.take(out, "threshold", 0.01, "output"), "output.threshold",
                                positive=True),
              "label": str(rd.take(out, "label", "", "output"))}

    if delay is not None and not g_n.is_identity:
        raise ConfigError("'nonlinearity.node' must be identity when a delay block is present")
    if momentum and (delay is not None or not (g_n.is_identity and g_l.is_identity)):
        raise ConfigError("'step.momentum' needs identity maps and no delay block")
    if eta == "auto" and not g_n.is_identity:
        raise ConfigError("'step.eta' = auto needs an identity node map; give a number")

    cfg = ScenarioConfig(name=name, demand=demand, topology=topology, roles=roles, costs=costs,
                         g_n=g_n, g_l=g_l, init=init, eta=eta, momentum=momentum, delay=delay,
                         termination=termination, output=output, defaults=tuple(rd.defaults),
                         raw=raw)
    try:
        problem = cfg.problem()
    except (GraphError, CostError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.initial_state(problem)
    return cfg


def _costs(rd: _Reader, data, roles) -> dict:
    rd.section(data, "costs")
    out = {"mode": rd.take(data, "mode", "random", "costs")}
    out["penalty"] = rd.take(data, "penalty", "power", "costs")
    if out["penalty"] not in ("power", "softplus"):
        raise ConfigError("'costs.penalty' must be power or softplus")
    out["sigma"] = _num(rd.take(data, "sigma", 2.0, "costs"), "costs.sigma", positive=True)
    out["regularizer"] = _num(rd.take(data, "regularizer", 1e-3, "costs"), "costs.regularizer",
                              nonneg=True)
    eps = data.get("epsilon")
    out["epsilon"] = None if eps is None else _num(eps, "costs.epsilon", nonneg=True)
    if eps is None:
        rd.defaults.append("costs.epsilon")
    for key in ("generator_box", "battery_box"):
        box = data.get(key)
        out[key] = None if box is None else _pair(box, f"costs.{key}")
    if out["mode"] == "random":
        if "node" in data:
            raise ConfigError("'costs.node' entries need costs.mode = explicit")
        out["seed"] = _num(rd.take(data, "seed", 0, "costs"), "costs.seed", int, nonneg=True)
        for key, default in DEFAULT_RANGES.items():
            out[key] = _pair(rd.take(data, key, default, "costs"), f"costs.{key}")
        if out["gamma"][0] <= 0:
            raise ConfigError("'costs.gamma' range must be positive")
    elif out["mode"] == "explicit":
        entries = data.get("node", [])
        if len(entries) != len(roles):
            raise ConfigError(f"cost count mismatch: {len(entries)} cost entries for "
                              f"{len(roles)} nodes")
        nodes = []
        for idx, e in enumerate(entries):
            path = f"costs.node[{idx}]"
            rd.section(e, path, "costs.node")
            kind = e.get("kind", "quadratic")
            if kind not in ("quadratic", "linear"):
                raise ConfigError(f"'{path}.kind' must be quadratic or linear")
            node = {"kind": kind, "beta": _num(e.get("beta", 0.0), f"{path}.beta"),
                    "alpha": _num(e.get("alpha", 0.0), f"{path}.alpha")}
            if kind == "quadratic":
                if "gamma" not in e:
                    raise ConfigError(f"missing key '{path}.gamma'")
                node["gamma"] = _num(e["gamma"], f"{path}.gamma", positive=True)
            else:
                node["reg"] = _num(e.get("reg", out["regularizer"]), f"{path}.reg", nonneg=True)
            if "box" in e:
                node["box"] = _pair(e["box"], f"{path}.box")
            for key in ("epsilon", "penalty", "sigma"):
                if key in e:
                    node[key] = e[key]
            nodes.append(node)
        out["node"] = nodes
    else:
        raise ConfigError(f"'costs.mode' must be random or explicit, got {out['mode']!r}")
    return out


def node_cost_params(costs: dict, roles) -> list[dict]:
    """Per-node parameter dicts; random draws come from ``default_rng(seed)``."""
    if costs["mode"] == "explicit":
        nodes = [dict(e) for e in costs["node"]]
    else:
        rng = np.random.default_rng(costs["seed"])
        nodes = []
        for r in roles:
            if r > 0:
                nodes.append({"kind": "quadratic",
                              "gamma": float(rng.uniform(*costs["gamma"])),
                              "beta": float(rng.uniform(*costs["beta"])),
                              "alpha": float(rng.uniform(*costs["alpha"]))})
            else:
                nodes.append({"kind": "linear",
                              "beta": float(rng.uniform(*costs["battery_beta"])),
                              "alpha": float(rng.uniform(*costs["battery_alpha"])),
                              "reg": costs["regularizer"]})
    for node, r in zip(nodes, roles):
        if "box" not in node:
            box = costs["generator_box"] if r > 0 else costs["battery_box"]
            if box is not None:
                node["box"] = box
    return nodes


def build_costs(costs: dict, roles) -> list:
    nodes = node_cost_params(costs, roles)
    curv = [nd["gamma"] if nd["kind"] == "quadratic" else nd["reg"] for nd in nodes]
    eps_default = 10.0 * max(curv)
    out = []
    for idx, nd in enumerate(nodes):
        try:
            if nd["kind"] == "quadratic":
                base = QuadraticCost(nd["gamma"], nd["beta"], nd["alpha"])
            else:
                base = LinearCost(nd["beta"], nd["alpha"], nd["reg"])
            if "box" not in nd:
                out.append(base)
                continue
            eps = nd.get("epsilon", costs["epsilon"])
            out.append(PenalizedCost(base, nd["box"][0], nd["box"][1],
                                     eps_default if eps is None else float(eps),
                                     nd.get("penalty", costs["penalty"]),
                                     float(nd.get("sigma", costs["sigma"]))))
        except CostError as exc:
            raise ConfigError(f"costs.node[{idx}]: {exc}") from None
    return out


def parse_config(text: str) -> ScenarioConfig:
    """Parse the TOML scenario format documented in this module."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_dict(data)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def set_dotted(data: dict, key: str, value) -> dict:
    """Copy of ``data`` with ``a.b.c = value`` applied (sections created as needed)."""
    out = copy.deepcopy(data)
    parts = key.split(".")
    cur = out
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"'{key}': '{p}' is not a section")
    cur[parts[-1]] = value
    return out
