"""Built-in benchmark problems with closed-form references.

``example_P`` is the scalar benchmark the test suite is anchored on: a
state-linear problem with state delay 2 and control delay 1 on [0, 4] whose
optimal control, state, adjoint and cost are known in closed form.
``lq_no_delay`` produces randomized linear-quadratic problems whose delay
couplings are inert, for round-trip and cross-method tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (ControlRegion, DelayPair, DelayedProblem, TimeHorizon)

E2 = math.e ** 2
E4 = math.e ** 4
E6 = math.e ** 6

#: minimal cost of the benchmark problem, (23 + e^2 + 34 e^4 - 2 e^6) / 16
EXAMPLE_P_COST = (23.0 + E2 + 34.0 * E4 - 2.0 * E6) / 16.0


@dataclass(frozen=True)
class ReferenceSolution:
    """Closed-form optimum: callables of scalar time plus the exact cost."""

    control: Callable[[float], float]
    state: Callable[[float], float]
    adjoint: Callable[[float], float]
    cost: float
    breakpoints: tuple = ()


def _p_adjoint(t: float) -> float:
    # eta(t) = e^(2-t) (t - e^2 - 1) on [0,2], 1 - e^(4-t) on (2,4]
    if t <= 2.0:
        return math.exp(2.0 - t) * (t - E2 - 1.0)
    return 1.0 - math.exp(4.0 - t)


def _p_control(t: float) -> float:
    # u(t) = -eta(t+1)/20 on [0,3], zero outside
    if t < 0.0:
        return 0.0
    if t < 1.0:
        return (math.exp(3.0 - t) - math.exp(1.0 - t) * t) / 20.0
    if t <= 3.0:
        return (math.exp(3.0 - t) - 1.0) / 20.0
    return 0.0


def _p_state(t: float) -> float:
    if t <= 0.0:
        return 1.0
    if t <= 1.0:
        return -1.0 + 2.0 * math.exp(t)
    if t <= 2.0:
        return ((E2 + 2.0 * E4 - 2.0 * E2 * t) * math.exp(-t) - 8.0
                + (17.0 - 2.0 * E2) * math.exp(t)) / 8.0
    if t <= 3.0:
        return (2.0 * math.exp(4.0 - t) + 4.0
                + (-47.0 / E2 + 17.0 - 2.0 * E2 + 16.0 * t / E2) * math.exp(t)) / 8.0
    return ((-E6 + E4 * t) * math.exp(-t) + 4.0
            + (-51.0 / E2 + 24.0 - 2.0 * E2 + 17.0 * t / E2 - 2.0 * t)
            * math.exp(t)) / 8.0


def example_P() -> tuple[DelayedProblem, ReferenceSolution]:
    """Scalar benchmark: minimize int_0^4 x + 100 u^2 under a delayed drift.

    Dynamics x' = x(t) + x(t-2) - 10 u(t-1) with x = 1 on [-2, 0] and u = 0
    on [-1, 0); the control is unconstrained.  The returned reference holds
    the optimal control/state/adjoint in closed form and the exact cost.
    """
    one = np.ones((1, 1))

    problem = DelayedProblem(
        n=1, m=1,
        A=lambda t: one,
        A_D=lambda t: one,
        g=lambda t, u: np.zeros(1),
        g_D=lambda t, v: -10.0 * np.atleast_1d(v),
        f0=lambda t, x, y: float(np.atleast_1d(x)[0]),
        g0=lambda t, u, v: 100.0 * float(np.atleast_1d(u)[0]) ** 2,
        phi=lambda t: np.ones(1),
        psi=lambda t: np.zeros(1),
        horizon=TimeHorizon(0.0, 4.0),
        delays=DelayPair(r=2.0, s=1.0),
        region=ControlRegion.whole_space(),
        d2_f0=lambda t, x, y: np.ones(1),
        d3_f0=lambda t, x, y: np.zeros(1),
        d2_g0=lambda t, u, v: 200.0 * np.atleast_1d(u),
        d3_g0=lambda t, u, v: np.zeros(1),
        du_g=lambda t, u: np.zeros((1, 1)),
        dv_gD=lambda t, v: -10.0 * np.ones((1, 1)),
        name="P",
    )
    reference = ReferenceSolution(
        control=_p_control,
        state=_p_state,
        adjoint=_p_adjoint,
        cost=EXAMPLE_P_COST,
        breakpoints=(0.0, 1.0, 2.0, 3.0),
    )
    return problem, reference


def lq_no_delay(n: int, m: int, horizon: TimeHorizon,
                seed: int = 0) -> tuple[DelayedProblem, Optional[ReferenceSolution]]:
    """Randomized linear-quadratic benchmark with inert delays.

    Delays cannot both be zero, so the problem carries formal delays of a
    tenth of the horizon with A_D = 0, g_D = 0 and cost terms independent of
    the delayed arguments: the delay machinery runs but has nothing to do.
    Returns no reference solution; tests cross-check methods against each
    other and against the homogeneous-flow cost oracle.
    """
    rng = np.random.default_rng(seed)
    A_mat = -np.eye(n) * (0.5 + rng.uniform(0, 0.5, size=n)) \
        + 0.2 * rng.standard_normal((n, n)) / max(1, n)
    B = rng.standard_normal((n, m)) / max(1, m)
    Q_half = rng.standard_normal((n, n)) / n
    Q = Q_half.T @ Q_half + 0.1 * np.eye(n)
    R = np.eye(m) * (1.0 + rng.uniform(0, 1, size=m))
    x0 = rng.standard_normal(n)
    tau = horizon.length / 10.0
    zero_nn = np.zeros((n, n))

    problem = DelayedProblem(
        n=n, m=m,
        A=lambda t: A_mat,
        A_D=lambda t: zero_nn,
        g=lambda t, u: B @ np.atleast_1d(u),
        g_D=lambda t, v: np.zeros(n),
        f0=lambda t, x, y: float(np.atleast_1d(x) @ Q @ np.atleast_1d(x)),
        g0=lambda t, u, v: float(np.atleast_1d(u) @ R @ np.atleast_1d(u)),
        phi=lambda t: x0,
        psi=lambda t: np.zeros(m),
        horizon=horizon,
        delays=DelayPair(r=tau, s=tau),
        region=ControlRegion.whole_space(),
        d2_f0=lambda t, x, y: 2.0 * (Q @ np.atleast_1d(x)),
        d3_f0=lambda t, x, y: np.zeros(n),
        d2_g0=lambda t, u, v: 2.0 * (R @ np.atleast_1d(u)),
        d3_g0=lambda t, u, v: np.zeros(m),
        du_g=lambda t, u: B,
        dv_gD=lambda t, v: np.zeros((n, m)),
        name=f"lq-{n}x{m}-seed{seed}",
    )
    return problem, None
