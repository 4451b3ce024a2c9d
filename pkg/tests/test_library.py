import math

import numpy as np
import pytest

from delayoc import validate
from delayoc.library import EXAMPLE_P_COST, lq_no_delay
from delayoc import TimeHorizon

E = math.e


def test_reference_cost_value():
    assert EXAMPLE_P_COST == pytest.approx(67.491786, abs=5e-7)
    assert EXAMPLE_P_COST == (23 + E**2 + 34 * E**4 - 2 * E**6) / 16


def test_problem_fields(p_problem):
    assert (p_problem.n, p_problem.m) == (1, 1)
    assert (p_problem.a, p_problem.b) == (0.0, 4.0)
    assert (p_problem.r, p_problem.s) == (2.0, 1.0)
    assert p_problem.A(1.7)[0, 0] == 1.0
    assert p_problem.A_D(0.3)[0, 0] == 1.0
    assert np.array_equal(p_problem.g(0.0, np.array([3.0])), [0.0])
    assert np.array_equal(p_problem.g_D(0.0, np.array([3.0])), [-30.0])
    assert p_problem.f0(0.0, np.array([2.0]), np.array([5.0])) == 2.0
    assert p_problem.g0(0.0, np.array([2.0]), np.array([5.0])) == 400.0
    assert p_problem.region.kind == "all"


def test_reference_point_values(p_reference):
    assert p_reference.control(3.5) == 0.0
    assert p_reference.control(-0.5) == 0.0
    assert p_reference.state(0.5) == pytest.approx(-1 + 2 * math.exp(0.5), rel=1e-15)
    assert p_reference.state(0.5) == pytest.approx(2.29744, abs=1e-5)
    assert p_reference.adjoint(2.0) == pytest.approx(1 - E**2, rel=1e-15)
    assert p_reference.adjoint(4.0) == 0.0


def test_reference_state_continuity_at_breakpoints(p_reference):
    for bp in (0.0, 1.0, 2.0, 3.0):
        eps = 1e-12
        left = p_reference.state(bp - eps)
        right = p_reference.state(bp + eps)
        assert right == pytest.approx(left, abs=1e-10)


def test_reference_adjoint_continuity_and_terminal(p_reference):
    assert p_reference.adjoint(2.0 + 1e-13) == pytest.approx(
        p_reference.adjoint(2.0), abs=1e-10)
    assert p_reference.adjoint(4.0) == 0.0


def test_reference_control_satisfies_maximality_relation(p_reference):
    # u(t) = -eta(t+1)/20 on [0, 3]
    for t in np.linspace(0.0, 3.0, 301):
        assert p_reference.control(float(t)) == pytest.approx(
            -p_reference.adjoint(float(t) + 1.0) / 20.0, abs=1e-12)


def test_reference_state_satisfies_delayed_ode(p_reference):
    # centered finite differences of the closed-form state against the RHS,
    # away from breakpoints
    ts = np.linspace(0.001, 3.999, 4000)
    keep = np.min(np.abs(ts[:, None] - np.array([[1.0, 2.0, 3.0]])), axis=1) > 2e-3
    d = 1e-7
    worst = 0.0
    for t in ts[keep]:
        dx = (p_reference.state(t + d) - p_reference.state(t - d)) / (2 * d)
        rhs = (p_reference.state(t) + p_reference.state(t - 2.0)
               - 10.0 * p_reference.control(t - 1.0))
        worst = max(worst, abs(dx - rhs))
    assert worst < 1e-6


def test_reference_adjoint_satisfies_adjoint_ode(p_reference):
    # eta' = 1 - eta - eta(t+2) chi_{t<=2}, away from the seam at t=2
    ts = np.concatenate([np.linspace(0.01, 1.99, 500),
                         np.linspace(2.01, 3.99, 500)])
    d = 1e-7
    worst = 0.0
    for t in ts:
        de = (p_reference.adjoint(t + d) - p_reference.adjoint(t - d)) / (2 * d)
        rhs = 1.0 - p_reference.adjoint(t)
        if t <= 2.0:
            rhs -= p_reference.adjoint(t + 2.0)
        worst = max(worst, abs(de - rhs))
    assert worst < 1e-6


def test_lq_benchmark_is_wellformed():
    problem, ref = lq_no_delay(2, 1, TimeHorizon(0.0, 1.0), seed=3)
    assert ref is None
    assert validate(problem) == []
    # delay couplings are inert
    assert np.all(problem.A_D(0.3) == 0.0)
    assert np.all(problem.g_D(0.3, np.array([1.0])) == 0.0)
    # stable drift
    assert np.all(np.linalg.eigvals(problem.A(0.0)).real < 0)


def test_lq_benchmark_deterministic_per_seed():
    p1, _ = lq_no_delay(2, 2, TimeHorizon(0.0, 1.0), seed=5)
    p2, _ = lq_no_delay(2, 2, TimeHorizon(0.0, 1.0), seed=5)
    assert np.array_equal(p1.A(0.0), p2.A(0.0))
    u = np.array([0.4, -0.2])
    assert np.array_equal(p1.g(0.0, u), p2.g(0.0, u))


def test_lq_zero_control_cost_matches_matrix_exponential_oracle():
    # with u = 0 the state is the homogeneous flow x(t) = expm(A t) x0 and
    # the cost integral of x' Q x has a quadrature-free oracle
    from scipy.linalg import expm
    from delayoc import IntegratorConfig, evaluate_cost, integrate_state
    from conftest import sample_control

    problem, _ = lq_no_delay(3, 2, TimeHorizon(0.0, 1.0), seed=9)
    A = problem.A(0.0)
    Q = 0.5 * np.stack([problem.d2_f0(0.0, e, e) for e in np.eye(3)]).T
    x0 = problem.phi(0.0)
    ts = np.linspace(0.0, 1.0, 2001)
    flows = np.stack([expm(A * t) @ x0 for t in ts])
    integrand = np.einsum("ti,ij,tj->t", flows, Q, flows)
    oracle = np.trapezoid(integrand, ts)

    cfg = IntegratorConfig(scheme="rk4", step=0.0125)
    u = sample_control(problem, lambda t: np.zeros(2), cfg)
    x = integrate_state(problem, u, cfg)
    cost = evaluate_cost(problem, x, u, cfg)
    assert cost == pytest.approx(oracle, rel=1e-6)


def test_lq_zero_couplings_make_augmented_band_vanish():
    from delayoc import grid_for
    from delayoc.reduction import augment

    problem, _ = lq_no_delay(2, 1, TimeHorizon(0.0, 1.0), seed=4)
    grid = grid_for(problem)
    aug = augment(problem, grid)
    _, MD, MDm = aug.block_components(0.05)
    assert np.all(MD == 0.0)
    assert np.all(MDm == 0.0)


def test_lq_sweep_and_transcription_agree():
    from delayoc import IntegratorConfig
    from delayoc.synthesis import SweepConfig, sweep
    from delayoc.transcription import solve_to_solution

    problem, _ = lq_no_delay(2, 1, TimeHorizon(0.0, 1.0), seed=3)
    cfg = IntegratorConfig(scheme="rk4", step=0.0125)
    sol_sweep = sweep(problem, SweepConfig(max_iters=150, control_tol=1e-10), cfg)
    # first-order Euler bias needs M ~ 1000 on this problem to sit inside
    # the 1e-3 relative band
    sol_disc = solve_to_solution(problem, 1000, tol=1e-9, max_iters=4000)
    assert sol_disc.cost == pytest.approx(sol_sweep.cost, rel=1e-3)
