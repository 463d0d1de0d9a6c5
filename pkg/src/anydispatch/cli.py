"""Command line front end: ``run``, ``preset``, ``sweep`` and ``bound``.

Output files go to ``--out``, else ``$ANYDISPATCH_OUT``, else ``./anydispatch_out``.
Exit codes: 0 converged, 2 budget exhausted, 3 unstable (worst run for
multi-run verbs), 64 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import presets
from .config import ConfigError, config_from_dict, load_config, parse_config
from .graph import AnalysisError
from .scenario import (EXIT_CODES, EXIT_CONFIG, bound_record, emit_report, expand_grid,
                       parse_grid, run_scenario, sweep, worst_exit)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anydispatch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one scenario config")
    r.add_argument("config")
    r.add_argument("--out")

    pr = sub.add_parser("preset", help="run a built-in experiment preset")
    pr.add_argument("name", choices=sorted(presets.PRESETS))
    pr.add_argument("--out")
    pr.add_argument("--workers", type=int)

    s = sub.add_parser("sweep", help="run a config over a parameter grid")
    s.add_argument("config")
    s.add_argument("--grid", required=True,
                   help='e.g. "delay.tau_bar=0,1,2;delay.mode=time_varying,time_invariant"')
    s.add_argument("--out")
    s.add_argument("--workers", type=int)

    b = sub.add_parser("bound", help="print the guaranteed step-rate bound and its inputs")
    b.add_argument("config")
    return p


def _read_dict(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            art = run_scenario(load_config(args.config), args.out)
            print(emit_report([art])[0], end="")
            return EXIT_CODES[art.summary["verdict"]]
        if args.verb == "preset":
            cfgs = presets.preset_configs(args.name)
            arts = sweep(cfgs, args.out, args.workers)
            text, _ = emit_report(arts, presets.REPORT_ORDER.get(args.name, "given"),
                                  args.out, args.name)
            print(text, end="")
            if any(a.summary["baseline_stand_in"] for a in arts):
                print("note: momentum rows use a heavy-ball stand-in baseline")
            return worst_exit(arts)
        if args.verb == "sweep":
            base = _read_dict(args.config)
            cfgs = expand_grid(base, parse_grid(args.grid))
            arts = sweep(cfgs, args.out, args.workers)
            text, _ = emit_report(arts, "given", args.out, base.get("name", "sweep"))
            print(text, end="")
            return worst_exit(arts)
        if args.verb == "bound":
            from .analysis import bound_for
            cfg = load_config(args.config)
            problem = cfg.problem()
            rep = bound_for(problem, cfg.g_l, cfg.tau_bar, cfg.initial_state(problem))
            rec = bound_record(rep)
            rec["guaranteed_rate"] = 0.99 * rep.bound
            print(json.dumps(rec, indent=2, sort_keys=True))
            return 0
    except (ConfigError, AnalysisError, tomllib.TOMLDecodeError, OSError, ValueError,
            KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


__all__ = ["main", "parse_config", "config_from_dict"]

if __name__ == "__main__":
    sys.exit(main())
