import numpy as np
import pytest

from anydispatch.analysis import classify_run, guaranteed_rate, solve_centralized
from anydispatch.costs import PenalizedCost, QuadraticCost
from anydispatch.dynamics import (InitError, NodeRole, Problem, SimState, Termination,
                                  feasible_init, momentum_baseline_step, protocol_rhs,
                                  run_to_convergence, step_euler)
from anydispatch.graph import build_cycle, from_edges
from anydispatch.nonlin import NonlinearMap

from _suite import MAP_KINDS, random_map, random_problem


def two_node():
    return Problem(from_edges(2, [(0, 1)]), [QuadraticCost(1.0)] * 2, [1, 1], 4.0)


def rhs_oracle(z, W, roles, grad, g_n, g_l, eta):
    """Direct double loop over the dense weight matrix."""
    n = len(z)
    x = roles * grad(z)
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if W[i, j] > 0:
                out[i] += W[i, j] * g_n(g_l(x[j]) - g_l(x[i]))
    return eta * roles * out


def test_roles():
    assert {int(r) for r in NodeRole} == {1, -1}


def test_two_node_rhs():
    p = two_node()
    z = np.array([3.0, 1.0])
    assert np.array_equal(protocol_rhs(z, p), [-4.0, 4.0])
    sat = NonlinearMap.saturation(1.0)
    assert np.array_equal(protocol_rhs(z, p, g_n=sat), [-1.0, 1.0])


def test_two_node_euler():
    s = step_euler(SimState(np.array([3.0, 1.0])), two_node(), eta_tau=0.1)
    assert np.allclose(s.z, [2.6, 1.4], atol=1e-15)
    assert s.k == 1


def test_rhs_matches_oracle():
    rng = np.random.default_rng(11)
    for trial in range(60):
        p, z0 = random_problem(trial)
        g_n = random_map(rng, MAP_KINDS[trial % 5])
        g_l = random_map(rng, MAP_KINDS[(trial // 5) % 5])
        z = z0 + rng.normal(size=p.n) * 5
        got = protocol_rhs(z, p, g_n, g_l, 0.7)
        want = rhs_oracle(z, p.net.weights, p.roles, p.gradients, g_n, g_l, 0.7)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_rate_conservation():
    rng = np.random.default_rng(12)
    for trial in range(1000):
        p, z0 = random_problem(10_000 + trial)
        g_n = random_map(rng, MAP_KINDS[trial % 5])
        g_l = random_map(rng, MAP_KINDS[(trial // 5) % 5])
        z = z0 + rng.normal(size=p.n) * rng.uniform(0.1, 50)
        rhs = protocol_rhs(z, p, g_n, g_l, float(rng.uniform(0.1, 2)))
        assert abs(np.dot(p.roles, rhs)) <= 1e-10 * max(1.0, np.abs(rhs).max())


def test_fixed_point():
    p, z0 = random_problem(3, boxes=False)
    o = solve_centralized(p)
    rhs = protocol_rhs(o.z_star, p)
    assert np.abs(rhs).max() <= 1e-9
    tr = run_to_convergence(p, o.z_star, 0.1, oracle=o)
    assert tr.iterations == 0
    assert tr.grad_spread[0] <= 1e-6


def test_step_preserves_feasibility():
    p, z0 = random_problem(4)
    s = SimState(z0)
    for _ in range(50):
        s = step_euler(s, p, eta_tau=0.5)
        assert abs(p.feasibility_gap(s.z)) <= 1e-9 * p.n * max(1.0, np.abs(s.z).max())


def test_nonfinite_step_is_frozen():
    p = two_node()
    s = step_euler(SimState(np.array([3.0, 1e308])), p, eta_tau=1e10)
    assert s.unstable and s.k == 0
    assert step_euler(s, p).z is s.z


def test_feasible_init_examples():
    roles = [1] * 7 + [-1] * 3
    z = feasible_init(roles, 700.0, [(20, 200)] * 7 + [(0, 200)] * 3, "explicit",
                      [100.0] * 7 + [0.0] * 3)
    assert np.dot(roles, z) == 700.0
    z = feasible_init([1] * 10, 700.0, [(20, 90)] * 10)
    assert np.array_equal(z, np.full(10, 70.0))
    with pytest.raises(InitError):
        feasible_init([1] * 10, 1000.0, [(20, 90)] * 10)
    with pytest.raises(InitError):
        feasible_init([1, 1], 10.0, None, "explicit", [3.0, 3.0])


def test_equal_surplus_mixed_boxes():
    rng = np.random.default_rng(13)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        roles = np.where(rng.random(n) < 0.7, 1, -1)
        roles[0] = 1
        lo = rng.uniform(0, 50, n)
        hi = lo + rng.uniform(1, 100, n)
        gen = roles > 0
        b = rng.uniform(lo[gen].sum() - hi[~gen].sum(), hi[gen].sum() - lo[~gen].sum())
        z = feasible_init(roles, b, list(zip(lo, hi)))
        assert abs(np.dot(roles, z) - b) <= 1e-9 * max(1, abs(b))
        assert np.all(z >= lo - 1e-9) and np.all(z <= hi + 1e-9)


def test_run_monotone_below_bound():
    costs = [PenalizedCost(QuadraticCost(g, be), 20, 90, 1.0)
             for g, be in zip(np.linspace(0.05, 0.15, 10), np.linspace(1, 4, 10))]
    p = Problem(build_cycle(10), costs, [1] * 10, 700.0)
    z0 = feasible_init(p.roles, 700.0, [(20, 90)] * 10)
    eta = guaranteed_rate(p, z0=z0)
    tr = run_to_convergence(p, z0, eta)
    assert classify_run(tr).verdict == "converged"
    assert np.all(np.diff(tr.residual) <= 1e-12)
    tr_fast = run_to_convergence(p, z0, 100 * eta)
    assert classify_run(tr_fast).verdict == "unstable"


def test_momentum_baseline():
    p, z0 = random_problem(21)
    s = SimState(z0)
    plain = step_euler(s, p, eta_tau=0.3)
    assert np.array_equal(momentum_baseline_step(s, None, 0.5, p, 0.3).z, plain.z)
    assert np.array_equal(momentum_baseline_step(s, z0 - 1.0, 0.0, p, 0.3).z, plain.z)
    s1 = momentum_baseline_step(plain, z0, 0.5, p, 0.3)
    assert np.allclose(s1.z, step_euler(plain, p, eta_tau=0.3).z + 0.5 * (plain.z - z0))
    assert abs(p.feasibility_gap(s1.z)) <= 1e-9 * p.n * np.abs(s1.z).max()


def test_momentum_run_matches_steps():
    p, z0 = random_problem(22)
    o = solve_centralized(p)
    tr = run_to_convergence(p, z0, 0.2, oracle=o, momentum=0.5,
                            termination=Termination(k_max=40), record=True)
    s, prev = SimState(z0), None
    for k in range(40):
        nxt = momentum_baseline_step(s, prev, 0.5, p, 0.2)
        prev, s = s.z, nxt
        assert np.allclose(tr.states[k + 1], s.z, rtol=1e-13, atol=1e-11)


def test_momentum_is_faster_on_cycle():
    costs = [PenalizedCost(QuadraticCost(g, be), 20, 90, 0.1)
             for g, be in zip(np.linspace(0.005, 0.01, 10), np.linspace(2, 3, 10))]
    p = Problem(build_cycle(10), costs, [1] * 10, 700.0)
    z0 = feasible_init(p.roles, 700.0, [(20, 90)] * 10)
    lin = run_to_convergence(p, z0, 1.0)
    mom = run_to_convergence(p, z0, 1.0, momentum=0.5)
    assert classify_run(lin).verdict == classify_run(mom).verdict == "converged"
    assert mom.iterations < lin.iterations


def test_momentum_rejects_nonlinear_maps():
    p, z0 = random_problem(23)
    with pytest.raises(ValueError):
        run_to_convergence(p, z0, 0.1, g_n=NonlinearMap.saturation(1.0), momentum=0.5)


def test_run_matches_step_loop():
    rng = np.random.default_rng(14)
    for trial in range(10):
        p, z0 = random_problem(30 + trial)
        g_n = random_map(rng, MAP_KINDS[trial % 5])
        tr = run_to_convergence(p, z0, 0.05, g_n=g_n, termination=Termination(k_max=25),
                                record=True)
        s = SimState(z0)
        for k in range(tr.iterations):
            s = step_euler(s, p, g_n, eta_tau=0.05)
            assert np.array_equal(tr.states[k + 1], s.z)


def test_residual_tolerance_stop():
    p, z0 = random_problem(40)
    o = solve_centralized(p)
    tr = run_to_convergence(p, z0, guaranteed_rate(p, z0=z0), oracle=o,
                            termination=Termination(tol_g=1e-30, tol_r=1e-3))
    assert tr.residual[-1] <= 1e-3 < tr.residual[-2]
    assert tr.stop == "converged"


def test_budget_and_guard():
    p, z0 = random_problem(41)
    tr = run_to_convergence(p, z0, 1e-6, termination=Termination(k_max=7))
    assert tr.iterations == 7 and tr.stop == "budget_exhausted"
    tr = run_to_convergence(p, z0, 1e3)
    assert tr.stop == "unstable"
    assert classify_run(tr).verdict == "unstable"
    assert np.all(np.abs(tr.feas_gap) <= 1e-9 * p.n * np.maximum(tr.zabs, 1.0))


def test_reports_series():
    p, z0 = random_problem(42)
    tr = run_to_convergence(p, z0, 0.1, termination=Termination(k_max=5))
    reps = list(tr.reports())
    assert len(reps) == 6
    assert reps[0].residual == tr.residual[0]
    assert all(r.residual >= -1e-9 for r in reps)
