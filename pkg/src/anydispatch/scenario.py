"""Run configured scenarios, write metrics CSVs and summaries, compare runs."""

from __future__ import annotations

import io
import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import RunSummary, bound_for, classify_run, solve_centralized
from .config import ScenarioConfig, config_from_dict, set_dotted
from .delaynet import run_delayed
from .dynamics import Trajectory, run_to_convergence

log = logging.getLogger(__name__)

OUT_ENV = "ANYDISPATCH_OUT"
CSV_VERSION = 1
EXIT_CODES = {"converged": 0, "budget_exhausted": 2, "unstable": 3}
EXIT_CONFIG = 64


def output_dir(path=None) -> Path:
    return Path(path or os.environ.get(OUT_ENV) or "anydispatch_out")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "run"


@dataclass
class RunArtifact:
    label: str
    csv_path: Optional[Path]
    summary: dict
    result: RunSummary
    trajectory: Trajectory


def resolve_eta(cfg: ScenarioConfig, problem, z0) -> tuple[float, Optional[dict]]:
    """Numeric step rate; ``auto`` is 0.99 x the guaranteed bound for the config's delay."""
    if cfg.eta != "auto":
        return float(cfg.eta), None
    rep = bound_for(problem, cfg.g_l, cfg.tau_bar, z0)
    return 0.99 * rep.bound, bound_record(rep)


def bound_record(rep) -> dict:
    inp = rep.inputs
    return {"bound": rep.bound, "eta_bar": rep.eta_bar, "kappa": inp.kappa, "Kappa": inp.Kappa,
            "lambda2": inp.lambda2, "lambdaN": inp.lambdaN, "u": inp.u, "v": rep.v,
            "tau_bar": inp.tau_bar, "zrange": list(rep.zrange), "grad_radius": rep.grad_radius}


def metrics_csv(traj: Trajectory, states: bool = True) -> str:
    """Fixed columns ``k,residual,feas_gap,grad_spread[,z_0..]`` at full precision."""
    cols = [np.arange(len(traj.residual)), traj.residual, traj.feas_gap, traj.grad_spread]
    head = ["k", "residual", "feas_gap", "grad_spread"]
    if states and traj.states is not None:
        cols.extend(traj.states.T)
        head.extend(f"z_{i}" for i in range(traj.states.shape[1]))
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack(cols), fmt="%.17g", delimiter=",",
               header=",".join(head), comments="")
    return buf.getvalue()


def simulate(cfg: ScenarioConfig):
    """Build and run one scenario; returns ``(trajectory, summary, extras)``."""
    problem = cfg.problem()
    z0 = cfg.initial_state(problem)
    oracle = solve_centralized(problem)
    eta, bound = resolve_eta(cfg, problem, z0)
    record = bool(cfg.output["states"])
    if cfg.delay is not None:
        traj = run_delayed(problem, z0, eta, cfg.schedule(problem.net), cfg.g_l,
                           cfg.termination, oracle, record)
    else:
        traj = run_to_convergence(problem, z0, eta, cfg.g_n, cfg.g_l, cfg.termination,
                                  oracle, cfg.momentum, record)
    res = classify_run(traj, cfg.termination.tol_g, cfg.output["threshold"])
    extras = {"eta_tau": eta, "bound": bound, "lambda_star": oracle.lambda_star,
              "H_star": oracle.H_star, "z_star": oracle.z_star.tolist(), "n": problem.n}
    return traj, res, extras


def run_scenario(cfg: ScenarioConfig, out_dir=None, write: bool = True) -> RunArtifact:
    """Run ``cfg``, write ``<label>.csv`` and ``<label>.json`` under ``out_dir``."""
    traj, res, extras = simulate(cfg)
    summary = {
        "csv_version": CSV_VERSION,
        "label": cfg.label,
        "verdict": res.verdict,
        "iterations": res.iterations,
        "iters_to_threshold": res.iters_to_threshold,
        "final_residual": res.final_residual,
        "final_spread": res.final_spread,
        "max_feas_gap": res.max_feas_gap,
        "max_abs_z": res.max_abs_z,
        "stop": traj.stop,
        "seed": cfg.costs.get("seed"),
        "delay_seed": None if cfg.delay is None else cfg.delay["seed"],
        "baseline_stand_in": bool(cfg.momentum),
        "params": cfg.echo(),
        **extras,
    }
    csv_path = None
    if write:
        d = output_dir(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        stem = _slug(cfg.label)
        csv_path = d / f"{stem}.csv"
        csv_path.write_text(metrics_csv(traj, cfg.output["states"]))
        summary["csv"] = str(csv_path)
        (d / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("%s: %s after %d iterations", cfg.label, res.verdict, res.iterations)
    return RunArtifact(cfg.label, csv_path, summary, res, traj)


def parse_grid(spec: str) -> list[tuple[str, list]]:
    """``"delay.tau_bar=0,1,2;delay.mode=time_varying,time_invariant"`` -> axes."""
    axes = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        if "=" not in part:
            raise ValueError(f"grid axis {part!r} needs key=v1,v2,...")
        key, vals = part.split("=", 1)
        axes.append((key.strip(), [_scalar(v.strip()) for v in vals.split(",") if v.strip()]))
    if not axes:
        raise ValueError("empty grid")
    return axes


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def expand_grid(base: dict, axes) -> list[ScenarioConfig]:
    """Cartesian product of the axes in row-major order (last axis fastest)."""
    configs = [base]
    for key, vals in axes:
        configs = [set_dotted(c, key, v) for c in configs for v in vals]
    out = []
    for c in configs:
        tag = ",".join(f"{k}={_get(c, k)}" for k, _ in axes)
        name = c.get("name", "scenario")
        out.append(config_from_dict(set_dotted(c, "output.label", f"{name}[{tag}]")))
    return out


def _get(d: dict, key: str):
    for p in key.split("."):
        d = d[p]
    return d


def sweep(configs: Sequence[ScenarioConfig], out_dir=None, workers: Optional[int] = None,
          write: bool = True) -> list[RunArtifact]:
    """Run independent scenarios on worker threads; results keep input order."""
    workers = workers or min(len(configs), os.cpu_count() or 1)
    if workers <= 1:
        return [run_scenario(c, out_dir, write) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_scenario(c, out_dir, write), configs))


REPORT_COLUMNS = ("scenario", "verdict", "iters_to_threshold", "iterations", "final_residual",
                  "max_feas_gap")


def _row(a: RunArtifact) -> list:
    s = a.summary
    hit = s["iters_to_threshold"]
    return [a.label, s["verdict"], "-" if hit is None else hit, s["iterations"],
            f"{s['final_residual']:.6g}", f"{s['max_feas_gap']:.3g}"]


def emit_report(artifacts: Sequence[RunArtifact], order: str = "given",
                out_dir=None, name: Optional[str] = None) -> tuple[str, str]:
    """Aligned text table and CSV of a set of runs.

    ``order="threshold"`` sorts by iterations-to-threshold (runs that never reach
    it last); ``"given"`` keeps input order. Writes ``<name>_report.csv`` when
    ``name`` is given.
    """
    if not artifacts:
        raise ValueError("emit_report needs at least one artifact")
    arts = list(artifacts)
    if order == "threshold":
        arts.sort(key=lambda a: (a.summary["iters_to_threshold"] is None,
                                 a.summary["iters_to_threshold"] or 0))
    elif order != "given":
        raise ValueError("order must be 'given' or 'threshold'")
    rows = [_row(a) for a in arts]
    widths = [max(len(str(x)) for x in col) for col in zip(REPORT_COLUMNS, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
             for r in [REPORT_COLUMNS, *rows]]
    text = "\n".join(lines) + "\n"
    csv = "\n".join(",".join(str(x) for x in r) for r in [REPORT_COLUMNS, *rows]) + "\n"
    if name is not None:
        d = output_dir(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{_slug(name)}_report.csv").write_text(csv)
    return text, csv


def worst_exit(artifacts: Sequence[RunArtifact]) -> int:
    return max(EXIT_CODES[a.summary["verdict"]] for a in artifacts)
