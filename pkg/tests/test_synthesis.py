import math

import numpy as np
import pytest

from delayoc import (ControlRegion, DelayPair, DelayedProblem, IntegratorConfig,
                     TimeHorizon, Trajectory, integrate_adjoint,
                     integrate_state)
from delayoc.library import EXAMPLE_P_COST
from delayoc.synthesis import (SweepConfig, certificate_report, certify,
                               hamiltonian, maximize_pointwise, sweep)

from conftest import sample_control

E = math.e


@pytest.fixture(scope="module")
def p_pipeline(p_problem, p_reference, rk4_cfg):
    u = sample_control(p_problem, p_reference.control, rk4_cfg)
    x = integrate_state(p_problem, u, rk4_cfg)
    eta = integrate_adjoint(p_problem, x, rk4_cfg)
    return u, x, eta


# ---------------------------------------------------------------------------
# Hamiltonian assembly
# ---------------------------------------------------------------------------

def test_late_window_objective_is_pure_quadratic(p_problem, p_pipeline):
    # for t in (3, 4] the shift indicator is off and only -100 u^2 depends on u
    u, x, eta = p_pipeline
    t = 3.5
    base = hamiltonian(t, [0.0], x, u, eta, p_problem)
    assert base.hd0_shifted is None
    for uu in (-0.7, 0.3, 1.1):
        parts = hamiltonian(t, [uu], x, u, eta, p_problem)
        assert parts.total - base.total == pytest.approx(-100.0 * uu**2, rel=1e-12)


def test_early_window_objective_has_shifted_coupling(p_problem, p_pipeline, p_reference):
    # for t in [0, 3] the u-dependent part is -100 u^2 - 10 eta(t+1) u
    u, x, eta = p_pipeline
    for t in (0.0, 1.25, 2.0, 3.0):
        base = hamiltonian(t, [0.0], x, u, eta, p_problem)
        assert base.hd0_shifted is not None
        eta_shift = p_reference.adjoint(t + 1.0)
        for uu in (-0.4, 0.8):
            parts = hamiltonian(t, [uu], x, u, eta, p_problem)
            expect = -100.0 * uu**2 - 10.0 * eta_shift * uu
            assert parts.total - base.total == pytest.approx(expect, abs=1e-8)


def test_parts_sum_to_total(p_problem, p_pipeline):
    u, x, eta = p_pipeline
    parts = hamiltonian(1.0, [0.2], x, u, eta, p_problem)
    assert parts.total == parts.hd1 + parts.hd0_shifted
    late = hamiltonian(3.9, [0.2], x, u, eta, p_problem)
    assert late.total == late.hd1


def test_zero_cost_problem_objective_independent_of_u():
    problem = DelayedProblem(
        n=1, m=1,
        A=lambda t: np.zeros((1, 1)),
        A_D=lambda t: np.zeros((1, 1)),
        g=lambda t, u: np.zeros(1),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: 0.0,
        g0=lambda t, u, v: 0.0,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.5),
    )
    cfg = IntegratorConfig(scheme="rk4", step=0.05)
    u = sample_control(problem, lambda t: np.zeros(1), cfg)
    x = integrate_state(problem, u, cfg)
    with pytest.warns(RuntimeWarning):
        eta = integrate_adjoint(problem, x, cfg)
    vals = [hamiltonian(0.3, [uu], x, u, eta, problem).total for uu in (-1, 0, 2)]
    assert np.ptp(vals) == 0.0


# ---------------------------------------------------------------------------
# pointwise maximization
# ---------------------------------------------------------------------------

def test_benchmark_maximizer_matches_closed_form(p_problem, p_pipeline, p_reference):
    u, x, eta = p_pipeline
    # u*(2) = (e - 1)/20
    out = maximize_pointwise(2.0, x, u, eta, p_problem)
    assert out[0] == pytest.approx((E - 1.0) / 20.0, abs=1e-9)
    assert out[0] == pytest.approx(0.08591, abs=1e-5)
    for t in (0.0, 0.5, 1.0, 2.5, 3.7):
        out = maximize_pointwise(t, x, u, eta, p_problem)
        assert out[0] == pytest.approx(p_reference.control(t), abs=1e-8)


def test_closed_form_zeroes_objective_gradient(p_problem, p_pipeline):
    u, x, eta = p_pipeline
    from delayoc.synthesis import _objective_gradient
    for t in (0.7, 2.2, 3.1):
        u_star = maximize_pointwise(t, x, u, eta, p_problem)
        active = t <= 3.0
        g = _objective_gradient(
            p_problem, t, u_star,
            np.atleast_1d(p_problem.psi(t - 1.0)) if t < 1.0 else u.eval(t - 1.0),
            u.eval(t + 1.0) if active else None,
            eta.eval(t), eta.eval(t + 1.0) if active else None, active)
        scale = max(1.0, float(np.max(np.abs(u_star))))
        assert np.max(np.abs(g)) <= 1e-10 * scale


def test_unforced_quadratic_cost_maximizer_is_zero():
    problem = DelayedProblem(
        n=1, m=2,
        A=lambda t: np.zeros((1, 1)),
        A_D=lambda t: np.zeros((1, 1)),
        g=lambda t, u: np.zeros(1),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: 0.0,
        g0=lambda t, u, v: float(np.atleast_1d(u) @ np.atleast_1d(u)),
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(2),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.5),
    )
    cfg = IntegratorConfig(scheme="rk4", step=0.05)
    u = sample_control(problem, lambda t: np.zeros(2), cfg)
    x = integrate_state(problem, u, cfg)
    with pytest.warns(RuntimeWarning):
        eta = integrate_adjoint(problem, x, cfg)
    out = maximize_pointwise(0.4, x, u, eta, problem)
    assert np.allclose(out, 0.0, atol=1e-12)


def test_argmax_invariance_and_delayed_slot_coupling(p_problem, p_pipeline):
    # Terms depending on time alone never move the maximizer.  A term in the
    # delayed control slot u_s is inert only where the shift indicator is off
    # (t > b - s): inside [a, b - s] the varying control occupies that slot of
    # the shifted part, so the maximizer moves by exactly -d(w)/d(u_s) / H.
    u, x, eta = p_pipeline
    time_only = DelayedProblem(
        **{**p_problem.__dict__,
           "g0": lambda t, uu, vv: (100.0 * float(np.atleast_1d(uu)[0]) ** 2
                                    + 3.0 * math.sin(t)),
           "d2_g0": lambda t, uu, vv: 200.0 * np.atleast_1d(uu),
           "d3_g0": lambda t, uu, vv: np.zeros(1)})
    shifted = DelayedProblem(
        **{**p_problem.__dict__,
           "g0": lambda t, uu, vv: (100.0 * float(np.atleast_1d(uu)[0]) ** 2
                                    + 7.0 * float(np.atleast_1d(vv)[0])),
           "d2_g0": lambda t, uu, vv: 200.0 * np.atleast_1d(uu),
           "d3_g0": lambda t, uu, vv: np.full(1, 7.0)})
    for t in (0.0, 1.5, 2.5, 3.6):
        base = maximize_pointwise(t, x, u, eta, p_problem)
        assert maximize_pointwise(t, x, u, eta, time_only)[0] \
            == pytest.approx(base[0], abs=1e-12)
        moved = maximize_pointwise(t, x, u, eta, shifted)
        if t > 3.0:  # indicator off: u_s-only terms are inert
            assert moved[0] == pytest.approx(base[0], abs=1e-12)
        else:  # u occupies the delayed slot of the shifted part
            assert moved[0] == pytest.approx(base[0] - 7.0 / 200.0, abs=1e-12)


def box_problem():
    # scalar control constrained to a box, quadratic running cost pulled
    # toward 0.6 so the unconstrained optimum is sometimes outside the box
    return DelayedProblem(
        n=1, m=1,
        A=lambda t: -np.eye(1),
        A_D=lambda t: np.zeros((1, 1)),
        g=lambda t, u: np.atleast_1d(u),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: float(np.atleast_1d(x)[0]) ** 2,
        g0=lambda t, u, v: float(np.atleast_1d(u)[0] - 0.6) ** 2,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.5),
        region=ControlRegion.box(lower=[-0.25], upper=[0.25]),
        d2_f0=lambda t, x, y: 2.0 * np.atleast_1d(x),
        d3_f0=lambda t, x, y: np.zeros(1),
        d2_g0=lambda t, u, v: 2.0 * (np.atleast_1d(u) - 0.6),
        d3_g0=lambda t, u, v: np.zeros(1),
        du_g=lambda t, u: np.eye(1),
        dv_gD=lambda t, v: np.zeros((1, 1)),
    )


def test_numeric_maximizers_agree_with_closed_form_on_box():
    problem = box_problem()
    cfg = IntegratorConfig(scheme="rk4", step=0.05)
    u = sample_control(problem, lambda t: np.zeros(1), cfg)
    x = integrate_state(problem, u, cfg)
    eta = integrate_adjoint(problem, x, cfg)
    for t in (0.1, 0.5, 0.9):
        ref = maximize_pointwise(t, x, u, eta, problem, "closed-form-quadratic")
        gold = maximize_pointwise(t, x, u, eta, problem, "golden-section")
        asc = maximize_pointwise(t, x, u, eta, problem, "projected-ascent")
        # golden section compares objective values, so it cannot resolve the
        # argmax below ~sqrt(eps)
        assert gold[0] == pytest.approx(ref[0], abs=1e-7)
        assert asc[0] == pytest.approx(ref[0], abs=1e-8)
        assert problem.region.contains(ref)


# ---------------------------------------------------------------------------
# forward-backward sweep
# ---------------------------------------------------------------------------

def test_sweep_on_benchmark_single_pass(p_problem, p_reference, rk4_cfg):
    sol = sweep(p_problem, SweepConfig(), rk4_cfg)
    assert sol.diagnostics["single_pass"]
    assert sol.diagnostics["iterations"] == 1
    assert sol.diagnostics["converged"]
    assert sol.cost == pytest.approx(EXAMPLE_P_COST, abs=1e-6)
    # control matches the closed form in sup norm
    ref = np.array([p_reference.control(t) for t in sol.control.grid])
    assert np.max(np.abs(sol.control.values[:, 0] - ref)) <= 1e-3


def test_sweep_zero_cost_converges_immediately():
    problem = DelayedProblem(
        n=1, m=1,
        A=lambda t: np.zeros((1, 1)),
        A_D=lambda t: np.zeros((1, 1)),
        g=lambda t, u: np.atleast_1d(u),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: 0.0,
        g0=lambda t, u, v: 0.0,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.5),
        region=ControlRegion.box(lower=[-1.0], upper=[1.0]),
    )
    cfg = IntegratorConfig(scheme="rk4", step=0.05)
    sol = sweep(problem, SweepConfig(maximizer="golden-section"), cfg)
    assert sol.cost == 0.0
    assert sol.diagnostics["converged"]


def state_coupled_problem():
    # f0 = x^2 makes the adjoint depend on the state: a genuine fixed point
    return DelayedProblem(
        n=1, m=1,
        A=lambda t: -0.5 * np.eye(1),
        A_D=lambda t: 0.3 * np.eye(1),
        g=lambda t, u: np.atleast_1d(u),
        g_D=lambda t, v: np.zeros(1),
        f0=lambda t, x, y: float(np.atleast_1d(x)[0]) ** 2,
        g0=lambda t, u, v: float(np.atleast_1d(u)[0]) ** 2,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 1.0),
        delays=DelayPair(0.5, 0.5),
        d2_f0=lambda t, x, y: 2.0 * np.atleast_1d(x),
        d3_f0=lambda t, x, y: np.zeros(1),
        d2_g0=lambda t, u, v: 2.0 * np.atleast_1d(u),
        d3_g0=lambda t, u, v: np.zeros(1),
        du_g=lambda t, u: np.eye(1),
        dv_gD=lambda t, v: np.zeros((1, 1)),
    )


def test_sweep_state_coupled_cost_decreases_monotonically():
    problem = state_coupled_problem()
    cfg = IntegratorConfig(scheme="rk4", step=0.025)
    sol = sweep(problem, SweepConfig(max_iters=80, control_tol=1e-10), cfg)
    assert not sol.diagnostics["single_pass"]
    assert sol.diagnostics["converged"]
    costs = sol.diagnostics["cost_history"]
    assert len(costs) >= 3
    diffs = np.diff(costs)
    assert np.all(diffs <= 1e-10 * max(1.0, abs(costs[0])))


def test_sweep_reports_nonconvergence_with_last_iterate():
    from delayoc import NoConvergence
    problem = state_coupled_problem()
    cfg = IntegratorConfig(scheme="rk4", step=0.05)
    with pytest.raises(NoConvergence) as info:
        sweep(problem, SweepConfig(max_iters=1, control_tol=1e-14), cfg)
    assert info.value.last is not None
    assert len(info.value.history) == 1


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def p_solution(p_problem, rk4_cfg):
    return sweep(p_problem, SweepConfig(), rk4_cfg)


def test_certificate_passes_on_benchmark_solution(p_problem, p_solution):
    cert = certify(p_problem, p_solution, samples=150, seed=0)
    assert cert.convexity_pass
    assert cert.maximality_pass
    assert cert.adjoint_pass
    assert cert.transversality_pass
    assert cert.overall
    assert cert.transversality_abs <= 1e-10


def test_certificate_flags_perturbed_control(p_problem, p_solution):
    vals = p_solution.control.values.copy()
    mask = (p_solution.control.grid >= 1.0) & (p_solution.control.grid <= 2.0)
    vals[mask] += 0.1
    perturbed = type(p_solution)(
        state=p_solution.state,
        control=Trajectory(grid=p_solution.control.grid, values=vals,
                           interp=p_solution.control.interp,
                           block=p_solution.control.block),
        adjoint=p_solution.adjoint, cost=p_solution.cost,
        method=p_solution.method, diagnostics={})
    cert = certify(p_problem, perturbed, samples=150, seed=0)
    assert not cert.maximality_pass
    assert cert.maximality_worst_residual > 0.5  # ~100 * 0.1^2
    assert not cert.overall


def test_certificate_flags_concave_state_cost(p_problem, p_solution):
    concave = DelayedProblem(
        **{**p_problem.__dict__,
           "f0": lambda t, x, y: -float(np.atleast_1d(x)[0]) ** 2,
           "d2_f0": lambda t, x, y: -2.0 * np.atleast_1d(x),
           "d3_f0": lambda t, x, y: np.zeros(1)})
    cert = certify(concave, p_solution, samples=60, seed=0)
    assert not cert.convexity_pass
    assert cert.convexity_worst_eig < -1.0


def test_certificate_tolerance_monotonicity(p_problem, p_solution):
    loose = certify(p_problem, p_solution, samples=80, seed=1)
    tight = certify(p_problem, p_solution, samples=80, seed=1,
                    convexity_slack=1e-12, maximality_slack=1e-12,
                    adjoint_tol_factor=1.0, transversality_tol=1e-14)
    for name in ("convexity_pass", "maximality_pass", "adjoint_pass",
                 "transversality_pass"):
        if not getattr(loose, name):
            assert not getattr(tight, name)


def test_certificate_report_is_flat_key_value(p_problem, p_solution):
    cert = certify(p_problem, p_solution, samples=30, seed=0)
    text = certificate_report(cert)
    lines = [ln for ln in text.strip().splitlines()]
    assert all("=" in ln for ln in lines)
    assert any(ln.startswith("overall = ") for ln in lines)
    assert "sampled" in text  # evidence, not proof
