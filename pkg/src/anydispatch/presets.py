"""Built-in experiment presets: the five reference scenarios at desk scale.

Each preset is a list of scenario dicts (the :mod:`config` layout) that the CLI
runs and tabulates. Random cost draws use documented seeds so every preset is
reproducible byte for byte.
"""

from __future__ import annotations

import copy

from .config import ScenarioConfig, config_from_dict

DEMAND = 700.0
SGN = {"kind": "sgn_composite", "mu1": 0.5, "mu2": 1.1}

FIG1_SEED = 0
DELAY_COST_SEED = 10
DELAY_SCHEDULE_SEED = 0
DELAY_TAUS = (0, 1, 2, 3, 4, 5)


def _fig1_base() -> dict:
    return {
        "name": "fig1",
        "demand": DEMAND,
        "topology": {"kind": "cycle", "n": 10, "weight": 1.0},
        "nodes": {"generators": 10, "batteries": 0},
        "costs": {"mode": "random", "seed": FIG1_SEED, "gamma": [0.002, 0.008],
                  "beta": [2.0, 3.0], "alpha": [0.0, 100.0], "generator_box": [20.0, 90.0]},
        "init": {"mode": "equal_surplus"},
        "step": {"eta": 1.0},
        "termination": {"k_max": 5000},
    }


def _mixed_base(name: str) -> dict:
    return {
        "name": name,
        "demand": DEMAND,
        "topology": {"kind": "k_hop_cycle", "n": 10, "hops": 2, "weight": 1.0},
        "nodes": {"generators": 7, "batteries": 3},
        "costs": {"mode": "random", "seed": 0, "gamma": [0.002, 0.008], "beta": [2.0, 3.0],
                  "alpha": [0.0, 100.0], "battery_beta": [-4.0, -3.0],
                  "battery_alpha": [0.0, 10.0], "regularizer": 1e-3,
                  "generator_box": [20.0, 200.0], "battery_box": [0.0, 200.0]},
        "init": {"mode": "by_role", "generator": 100.0, "battery": 0.0},
        "step": {"eta": 1.0},
        "termination": {"k_max": 20000},
    }


def _delay_base(name: str, eta: float) -> dict:
    # stiffer draws than fig2 so that delay-induced instability shows up at desk-scale rates
    d = _mixed_base(name)
    d["costs"].update(seed=DELAY_COST_SEED, gamma=[0.05, 0.15], battery_beta=[-23.0, -21.0],
                      epsilon=0.1)
    d["step"] = {"eta": eta}
    d["termination"] = {"k_max": 100_000}
    d["output"] = {"states": False}
    return d


def _variant(base: dict, label: str, **sections) -> dict:
    d = copy.deepcopy(base)
    for key, val in sections.items():
        d.setdefault(key, {}).update(val)
    d.setdefault("output", {})["label"] = f"{base['name']}-{label}"
    return d


def fig1() -> list[dict]:
    """Cycle of 10 generators: linear vs saturation vs sgn vs momentum stand-in."""
    b = _fig1_base()
    return [
        _variant(b, "linear"),
        _variant(b, "saturation", nonlinearity={"node": {"kind": "saturation", "limit": 0.2}}),
        _variant(b, "sgn", nonlinearity={"node": dict(SGN)}),
        _variant(b, "momentum-stand-in", step={"momentum": 0.5}),
    ]


def fig2() -> list[dict]:
    """2-hop cycle, 7 generators + 3 batteries: linear vs sgn maps."""
    b = _mixed_base("fig2")
    return [
        _variant(b, "linear"),
        _variant(b, "sgn-0.5-1.1", nonlinearity={"node": dict(SGN)}),
        _variant(b, "sgn-0.3-1.3",
                 nonlinearity={"node": {"kind": "sgn_composite", "mu1": 0.3, "mu2": 1.3}}),
    ]


def _delay_sweep(name: str, eta: float) -> list[dict]:
    b = _delay_base(name, eta)
    out = []
    for mode in ("time_varying", "time_invariant"):
        for tau in DELAY_TAUS:
            out.append(_variant(b, f"{mode}-tau{tau}",
                                delay={"tau_bar": tau, "mode": mode, "seed": DELAY_SCHEDULE_SEED}))
    return out


def fig3() -> list[dict]:
    """Delay sweep at eta_tau = 0.5, both delay modes."""
    return _delay_sweep("fig3", 0.5)


def fig4() -> list[dict]:
    """The fig3 sweep at half the step rate."""
    return _delay_sweep("fig4", 0.25)


def fig5() -> list[dict]:
    """tau_bar = 5 time-varying delays at eta_tau = 0.5 and 0.25, with states recorded."""
    out = []
    for eta in (0.5, 0.25):
        b = _delay_base("fig5", eta)
        b["output"] = {"states": True}
        out.append(_variant(b, f"eta{eta}", delay={"tau_bar": 5, "mode": "time_varying",
                                                   "seed": DELAY_SCHEDULE_SEED}))
    return out


PRESETS = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5}
REPORT_ORDER = {"fig1": "threshold", "fig2": "threshold"}


def preset_dicts(name: str) -> list[dict]:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_configs(name: str) -> list[ScenarioConfig]:
    return [config_from_dict(d) for d in preset_dicts(name)]


def delay_threshold(verdicts: dict) -> int | None:
    """Smallest tau_bar whose run did not converge, ``None`` if all converged."""
    bad = [tau for tau, v in sorted(verdicts.items()) if v != "converged"]
    return bad[0] if bad else None
