import numpy as np
import pytest

from delayoc import (ControlRegion, DelayPair, DelayedProblem, TimeHorizon,
                     validate)
from delayoc.model import fd_gradient, fd_jacobian


def scalar_problem(**overrides):
    base = dict(
        n=1, m=1,
        A=lambda t: np.eye(1),
        A_D=lambda t: np.zeros((1, 1)),
        g=lambda t, u: np.atleast_1d(u),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: float(np.atleast_1d(x)[0]) ** 2,
        g0=lambda t, u, v: float(np.atleast_1d(u)[0]) ** 2,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.25),
        region=ControlRegion.whole_space(),
    )
    base.update(overrides)
    return DelayedProblem(**base)


def test_example_problem_validates_clean(p_problem):
    assert validate(p_problem) == []


def test_simultaneously_zero_delays_rejected_at_construction():
    with pytest.raises(ValueError):
        DelayPair(0.0, 0.0)


def test_validate_reports_simultaneously_zero_delays():
    # the type invariant already forbids construction; validate() still has
    # to diagnose a pair smuggled past it
    pair = object.__new__(DelayPair)
    object.__setattr__(pair, "r", 0.0)
    object.__setattr__(pair, "s", 0.0)
    problem = scalar_problem(delays=pair)
    violations = validate(problem)
    assert any("simultaneously zero" in v.message for v in violations)


def test_nan_history_is_reported():
    problem = scalar_problem(
        phi=lambda t: np.full(1, np.nan) if t <= -0.49 else np.ones(1))
    violations = validate(problem)
    assert any(v.field == "phi" and "non-finite" in v.message for v in violations)


def test_jump_in_dynamics_matrix_is_flagged():
    problem = scalar_problem(A=lambda t: np.eye(1) * (1.0 if t < 0.5 else 3.0))
    violations = validate(problem)
    assert any(v.field == "A" and "discontinuity" in v.message for v in violations)


def test_validate_is_deterministic(p_problem):
    problem = scalar_problem(
        phi=lambda t: np.full(1, np.inf) if t < -0.3 else np.ones(1))
    assert validate(problem) == validate(problem)
    assert validate(p_problem) == validate(p_problem)


def test_horizon_ordering_enforced():
    with pytest.raises(ValueError):
        TimeHorizon(2.0, 1.0)


def test_box_bounds_ordering_enforced():
    with pytest.raises(ValueError):
        ControlRegion.box(lower=[1.0], upper=[0.0])
    region = ControlRegion.box(lower=[-1.0, 0.0], upper=[1.0, 2.0])
    assert np.array_equal(region.project(np.array([5.0, -3.0])), [1.0, 0.0])


def test_fd_gradient_matches_analytic_quadratic():
    f = lambda t, x, y: float(x @ x) + 2.0 * float(x @ y)
    grad = fd_gradient(f, 1)
    x = np.array([0.3, -1.2])
    y = np.array([2.0, 0.5])
    exact = 2.0 * x + 2.0 * y
    assert np.allclose(grad(0.0, x, y), exact, atol=1e-7)


def test_fd_jacobian_matches_linear_map():
    B = np.array([[1.0, 2.0], [0.0, -3.0], [4.0, 0.5]])
    g = lambda t, u: B @ u
    jac = fd_jacobian(g, 1)
    assert np.allclose(jac(0.0, np.array([0.7, -0.2])), B, atol=1e-8)


def test_problem_installs_fd_fallbacks():
    problem = scalar_problem()
    x = np.array([1.5])
    # f0 = x^2 so d2_f0 = 2x, d3_f0 = 0
    assert np.allclose(problem.d2_f0(0.0, x, x), [3.0], atol=1e-6)
    assert np.allclose(problem.d3_f0(0.0, x, x), [0.0], atol=1e-6)
    # g(t,u) = u so du_g = I
    assert np.allclose(problem.du_g(0.0, np.zeros(1)), np.eye(1), atol=1e-8)
