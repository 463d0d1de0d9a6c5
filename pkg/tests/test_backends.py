import os
import subprocess
import sys

import numpy as np
import pytest

from anydispatch import _accel, kernels
from anydispatch.analysis import solve_centralized
from anydispatch.delaynet import run_delayed, sample_schedule
from anydispatch.dynamics import Termination, protocol_rhs, run_to_convergence

from _suite import MAP_KINDS, random_map, random_problem

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _with(monkeypatch, impl):
    for name in ("run_sync", "run_delayed", "rhs_sync"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))


def _fields(tr):
    return (tr.residual, tr.feas_gap, tr.grad_spread, tr.zabs, tr.states)


def _polynomial(p, *maps):
    """No exp/log/pow anywhere: both backends then round identically."""
    from anydispatch.kernels.codes import PEN_SOFTPLUS
    return (not np.any(p.packed[:, 6] == PEN_SOFTPLUS)
            and all(m.kind in ("identity", "saturation", "table") for m in maps))


def _compare(a, b, exact):
    assert a.stop == b.stop
    if exact:
        for x, y in zip(_fields(a), _fields(b)):
            assert np.array_equal(x, y)
        return
    # libm and numpy transcendentals may differ in the last ulp
    for x, y in zip((a.residual, a.grad_spread, a.zabs, a.states),
                    (b.residual, b.grad_spread, b.zabs, b.states)):
        assert np.allclose(x, y, rtol=1e-9, atol=1e-9 * np.max(np.abs(x)))
    scale = 1e-9 * a.states.shape[1] * max(a.max_abs_z, 1.0)
    assert np.max(np.abs(a.feas_gap)) <= scale and np.max(np.abs(b.feas_gap)) <= scale


def _both(monkeypatch, fn):
    _with(monkeypatch, kernels.loops)
    a = fn()
    _with(monkeypatch, kernels.vector)
    b = fn()
    return a, b


@needs_numba
@pytest.mark.parametrize("seed", range(6))
def test_sync_backends_identical(monkeypatch, seed):
    p, z0 = random_problem(900 + seed)
    o = solve_centralized(p)
    rng = np.random.default_rng(seed)
    g_n = random_map(rng, MAP_KINDS[seed % len(MAP_KINDS)])
    g_l = random_map(rng, MAP_KINDS[(seed + 2) % len(MAP_KINDS)])
    beta = 0.4 if seed % 3 == 0 else 0.0
    if beta:
        g_n = g_l = random_map(rng, "identity")
    run = lambda: run_to_convergence(p, z0, 0.05, g_n, g_l, Termination(k_max=400), o, beta,
                                     record=True)
    a, b = _both(monkeypatch, run)
    exact = _polynomial(p, g_n, g_l)
    _compare(a, b, exact)
    ra, rb = _both(monkeypatch, lambda: protocol_rhs(z0, p, g_n, g_l))
    assert np.array_equal(ra, rb) if exact else np.allclose(ra, rb, rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("mode", ["time_varying", "time_invariant"])
def test_delayed_backends_identical(monkeypatch, mode):
    for seed in range(4):
        p, z0 = random_problem(950 + seed)
        sch = sample_schedule(p.net, seed + 1, mode, seed)
        g_l = random_map(np.random.default_rng(seed), ["identity", "table", "saturation",
                                                        "log_quantizer"][seed])
        run = lambda: run_delayed(p, z0, 0.05, sch, g_l, Termination(k_max=500), record=True)
        a, b = _both(monkeypatch, run)
        _compare(a, b, _polynomial(p, g_l))


@needs_numba
def test_polynomial_instances_bit_identical(monkeypatch):
    from anydispatch.costs import PenalizedCost
    from anydispatch.dynamics import Problem
    hits = 0
    for seed in range(40):
        p, z0 = random_problem(1000 + seed, penalty="power")
        rng = np.random.default_rng(seed)
        g_l = random_map(rng, ["identity", "saturation", "table"][seed % 3])
        sch = sample_schedule(p.net, seed % 4, "time_varying", seed)
        a, b = _both(monkeypatch, lambda: run_delayed(p, z0, 0.1, sch, g_l,
                                                      Termination(k_max=300), record=True))
        _compare(a, b, True)
        c, d = _both(monkeypatch, lambda: run_to_convergence(
            p, z0, 0.1, g_l=g_l, termination=Termination(k_max=300), record=True))
        _compare(c, d, True)
        hits += 1
    assert hits == 40


def test_env_flag_selects_numpy():
    env = dict(os.environ, ANYDISPATCH_DISABLE_NUMBA="1")
    code = "from anydispatch import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "numpy"
    env.pop("ANYDISPATCH_DISABLE_NUMBA")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.stdout.strip() == ("numba" if _accel.HAVE_NUMBA else "numpy")
