"""Time the numba and numpy simulation backends on preset-sized runs.

    python benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Both backends run the same fixed-length problems (tolerance disabled so every
run takes exactly ``--steps`` steps). The first numba call is reported
separately because it includes JIT compilation.
"""

import argparse
import time

import numpy as np

from anydispatch import _accel, kernels, presets
from anydispatch.analysis import solve_centralized
from anydispatch.delaynet import run_delayed
from anydispatch.dynamics import Termination, run_to_convergence


def _use(impl):
    for name in ("run_sync", "run_delayed", "rhs_sync"):
        setattr(kernels, name, getattr(impl, name))


def _cases(steps):
    term = Termination(tol_g=0.0, k_max=steps)
    sync = presets.preset_configs("fig2")[0]
    delayed = [c for c in presets.preset_configs("fig4") if c.tau_bar == 5]
    out = []
    p = sync.problem()
    z0 = sync.initial_state(p)
    o = solve_centralized(p)
    out.append(("sync n=10 linear",
                lambda: run_to_convergence(p, z0, 0.5, sync.g_n, sync.g_l, term, o)))
    for cfg in delayed:
        q = cfg.problem()
        w0 = cfg.initial_state(q)
        oq = solve_centralized(q)
        sched = cfg.schedule(q.net)
        out.append((f"delayed n=10 {cfg.delay['mode']} tau5",
                    lambda q=q, w0=w0, oq=oq, sched=sched, cfg=cfg:
                    run_delayed(q, w0, 0.25, sched, cfg.g_l, term, oq)))
    return out


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cases = _cases(args.steps)
    backends = [("numpy", kernels.vector)]
    if _accel.HAVE_NUMBA:
        backends.insert(0, ("numba", kernels.loops))
    else:
        print("numba not installed; timing the numpy backend only")

    print(f"{'case':34s} {'backend':8s} {'best s':>9s} {'us/step':>9s}")
    for label, fn in cases:
        for name, impl in backends:
            _use(impl)
            if name == "numba":
                t0 = time.perf_counter()
                fn()
                print(f"{label:34s} {'first':8s} {time.perf_counter() - t0:9.3f}")
            best = _best(fn, args.repeat)
            print(f"{label:34s} {name:8s} {best:9.3f} {1e6 * best / args.steps:9.2f}")
    _use(kernels.loops if _accel.USE_NUMBA else kernels.vector)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
