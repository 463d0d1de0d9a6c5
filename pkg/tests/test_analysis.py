import math

import numpy as np
import pytest

from anydispatch.analysis import (StepBoundInputs, bound_for, classify_run, guaranteed_rate,
                                  operating_range, solve_centralized, step_bound)
from anydispatch.costs import LinearCost, PenalizedCost, QuadraticCost
from anydispatch.dynamics import NodeRole, Problem, Termination, Trajectory, run_to_convergence
from anydispatch.graph import AnalysisError, Network, build_cycle, from_edges
from anydispatch.nonlin import NonlinearMap

from _suite import random_problem

LAMBDA2_CYCLE10 = 2 - 2 * math.cos(2 * math.pi / 10)


def test_step_bound_examples():
    assert step_bound(StepBoundInputs(1, 1, 1, 1, 1)) == 1.0
    base = StepBoundInputs(1, 1, LAMBDA2_CYCLE10, 4.0, 0.105)
    assert step_bound(base) == pytest.approx(0.22736, abs=1e-5)
    delayed = StepBoundInputs(1, 1, LAMBDA2_CYCLE10, 4.0, 0.105, tau_bar=3)
    assert step_bound(delayed) == pytest.approx(step_bound(base) / 4, rel=1e-15)
    assert step_bound(delayed) == pytest.approx(0.05684, abs=1e-5)


@pytest.mark.parametrize("kw", [dict(kappa=0), dict(Kappa=math.inf), dict(lambda2=0),
                                dict(u=-1), dict(tau_bar=-1), dict(kappa=2.0),
                                dict(lambda2=5.0)])
def test_step_bound_rejects_bad_inputs(kw):
    args = dict(kappa=1.0, Kappa=1.0, lambda2=1.0, lambdaN=4.0, u=1.0)
    args.update(kw)
    with pytest.raises(AnalysisError):
        StepBoundInputs(**args)


def test_bound_for_cycle10_quadratic():
    p = Problem(build_cycle(10), [QuadraticCost(0.1)] * 10, [1] * 10, 700.0)
    rep = bound_for(p)
    assert rep.inputs.u == pytest.approx(0.105)
    assert rep.v == pytest.approx(0.095)
    assert rep.bound == pytest.approx(LAMBDA2_CYCLE10 / (0.105 * 16), rel=1e-9)
    assert bound_for(p, tau_bar=3).bound == pytest.approx(rep.bound / 4, rel=1e-12)
    assert bound_for(p, tau_bar=3).eta_bar == pytest.approx(rep.bound, rel=1e-12)
    assert guaranteed_rate(p) == pytest.approx(0.99 * rep.bound)


def test_bound_refuses_sgn_link_map():
    p = Problem(build_cycle(4), [QuadraticCost(0.1)] * 4, [1] * 4, 10.0)
    with pytest.raises(AnalysisError, match="explicit eta"):
        bound_for(p, NonlinearMap.sgn_composite(0.5, 1.1))


def test_bound_uses_saturation_sector():
    p = Problem(build_cycle(4), [QuadraticCost(1.0)] * 4, [1] * 4, 10.0)
    rep = bound_for(p, NonlinearMap.saturation(1.0), zrange=(0.0, 2.0))
    # largest gradient on [0, 2] is 4, so kappa = 1/4
    assert rep.inputs.kappa == pytest.approx(0.25, rel=1e-6)
    assert rep.inputs.Kappa == 1.0


def test_operating_range():
    c = PenalizedCost(QuadraticCost(1.0), 20.0, 90.0, 1.0)
    p = Problem(build_cycle(3), [c, c, QuadraticCost(1.0)], [1] * 3, 100.0)
    assert operating_range(p) == (-30.0, 140.0)


def test_scale_consistency():
    for seed in range(5):
        p, z0 = random_problem(600 + seed)
        net2 = Network(2 * p.net.weights)
        p2 = Problem(net2, p.costs, p.roles, p.demand)
        a, b = bound_for(p), bound_for(p2)
        assert b.inputs.lambda2 == pytest.approx(2 * a.inputs.lambda2, rel=1e-12)
        assert b.inputs.lambdaN == pytest.approx(2 * a.inputs.lambdaN, rel=1e-12)
        assert b.bound == pytest.approx(a.bound / 2, rel=1e-12)


def test_oracle_equal_split():
    p = Problem(build_cycle(10), [QuadraticCost(0.005, 2.5, 10.0)] * 10, [1] * 10, 700.0)
    o = solve_centralized(p)
    assert np.allclose(o.z_star, 70.0, atol=1e-9)


def test_oracle_two_generators():
    p = Problem(from_edges(2, [(0, 1)]), [QuadraticCost(1.0), QuadraticCost(2.0)], [1, 1], 9.0)
    o = solve_centralized(p)
    assert np.allclose(o.z_star, [6.0, 3.0], atol=1e-9)
    assert o.lambda_star == pytest.approx(12.0, abs=1e-8)
    assert o.H_star == pytest.approx(36 + 18, abs=1e-7)


def test_oracle_kkt_on_seeded_instances():
    for seed in range(100):
        p, _ = random_problem(700 + seed)
        o = solve_centralized(p)
        assert o.kkt_residual(p) <= 1e-8, seed
        assert abs(p.feasibility_gap(o.z_star)) <= 1e-10 * p.n


def test_oracle_rejects_flat_cost():
    p = Problem(from_edges(2, [(0, 1)]), [QuadraticCost(1.0), LinearCost(2.0)], [1, -1], 5.0)
    with pytest.raises(AnalysisError, match="regularizer"):
        solve_centralized(p)


def planted(rng, n):
    """Quadratic instance (penalty weight 0) with a known optimum in a small box."""
    roles = [NodeRole.GENERATOR] * (n - 1) + [NodeRole(int(rng.choice([1, -1])))]
    a = np.array([float(r) for r in roles])
    zs = rng.uniform(10, 50, n)
    gam = rng.uniform(0.2, 2.0, n)
    lam = rng.uniform(5, 30)
    costs = []
    for i in range(n):
        base = QuadraticCost(gam[i], lam * a[i] - 2 * gam[i] * zs[i], 1.0)
        costs.append(PenalizedCost(base, zs[i] - rng.uniform(0.5, 1.5), zs[i] + rng.uniform(0.5, 1.5), 0.0))
    net = from_edges(n, [(i, i + 1) for i in range(n - 1)])
    return Problem(net, costs, roles, float(a @ zs)), zs


def brute_force(p, step=1e-3):
    """Exhaustive grid over the boxes of all but the last node; the last closes the balance."""
    a = p.roles
    grids = [np.arange(c.d_lo, c.d_hi + step / 2, step) for c in p.costs[:-1]]
    best, best_z = np.inf, None
    mesh = np.meshgrid(*grids, indexing="ij") if grids else []
    free = np.stack([m.ravel() for m in mesh])
    last = (p.demand - a[:-1] @ free) / a[-1]
    c_last = p.costs[-1]
    ok = (last >= c_last.d_lo) & (last <= c_last.d_hi)
    z = np.vstack([free, last])[:, ok]
    total = sum(c.value(z[i]) for i, c in enumerate(p.costs))
    j = int(np.argmin(total))
    return z[:, j]


@pytest.mark.parametrize("seed", range(6))
def test_oracle_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    p, zs = planted(rng, 2 + seed % 2)
    o = solve_centralized(p)
    assert np.allclose(o.z_star, zs, atol=1e-8)
    assert np.max(np.abs(brute_force(p) - o.z_star)) <= 2e-3


def _traj(res, spread, stop="tol_g", zabs=None):
    res = np.asarray(res, float)
    return Trajectory(res, np.zeros_like(res), np.asarray(spread, float),
                      np.ones_like(res) if zabs is None else np.asarray(zabs, float),
                      None, stop, 1.0)


def test_classify_examples():
    s = classify_run(_traj([0.0] * 3, [0.0] * 3))
    assert s.verdict == "converged" and s.iters_to_threshold == 0
    s = classify_run(_traj([1.0, 2.0, 50.0], [1, 1, 1], stop="unstable"))
    assert s.verdict == "unstable"
    s = classify_run(_traj([1.0, 0.5, 0.2], [1, 1, 1], stop="budget_exhausted"))
    assert s.verdict == "budget_exhausted" and s.iters_to_threshold is None
    s = classify_run(_traj([1.0, 0.001] + [0.5] * 12, [1] * 14, stop="budget_exhausted"))
    assert s.verdict == "unstable"  # the tail stays 500x above the minimum
    dip = [1.0, 1e-5, 0.4, 0.2] + [0.1 / 2 ** k for k in range(30)]
    s = classify_run(_traj(dip, [1] * (len(dip) - 1) + [1e-7]))
    assert s.verdict == "converged"  # a transient dip, then convergence
    s = classify_run(_traj([1.0, 0.5, np.nan], [1, 1, 1], stop="unstable"))
    assert s.verdict == "unstable"
    s = classify_run(_traj([1.0, 0.1, 0.005, 0.0], [1, 0.1, 0.01, 1e-7]))
    assert s.verdict == "converged" and s.iters_to_threshold == 2


def test_classify_real_run_at_optimum():
    p, _ = random_problem(801)
    o = solve_centralized(p)
    tr = run_to_convergence(p, o.z_star, 0.01, oracle=o, termination=Termination(tol_g=1e-6))
    s = classify_run(tr)
    assert s.verdict == "converged" and s.iterations == 0 and s.iters_to_threshold == 0


def test_classify_guard_trip():
    p, z0 = random_problem(802)
    tr = run_to_convergence(p, z0, 500.0, termination=Termination(k_max=10_000))
    assert tr.stop == "unstable"
    assert classify_run(tr).verdict == "unstable"
