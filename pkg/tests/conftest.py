import numpy as np
import pytest

from delayoc import IntegratorConfig, Trajectory, example_P, grid_for


def sample_control(problem, fn, cfg, grid=None):
    """Sample a scalar-time control callable on the solve node grid."""
    grid = grid or grid_for(problem)
    nsub = cfg.substeps(grid.h)
    step = cfg.step
    total = grid.N * nsub
    ts = problem.a + step * np.arange(total + 1)
    vals = np.array([np.atleast_1d(fn(float(t))) for t in ts])
    return Trajectory(grid=ts, values=vals, interp=cfg.interp, block=nsub)


@pytest.fixture(scope="session")
def p_problem():
    problem, _ = example_P()
    return problem


@pytest.fixture(scope="session")
def p_reference():
    _, ref = example_P()
    return ref


@pytest.fixture(scope="session")
def rk4_cfg():
    return IntegratorConfig(scheme="rk4", step=1e-3, quadrature="simpson")


@pytest.fixture(scope="session")
def coarse_cfg():
    return IntegratorConfig(scheme="rk4", step=0.02, quadrature="simpson")
