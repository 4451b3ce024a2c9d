"""Independent cross-check: direct Euler transcription of the delayed problem.

The horizon [a, b] is split into M subintervals; the control samples
u_0..u_{M-1} are the decision variables.  The state follows the forward
Euler recursion

    x_{j+1} = x_j + dt (A_j x_j + A_D_j x_{j-dr} + g_j(u_j) + g_D_j(u_{j-ds}))

with history indices frozen from phi and psi, and the cost is the left
Riemann sum of the running cost.  The gradient is the exact discrete
adjoint of this recursion: each u_j also acts through the delayed slot at
step j + ds, and the backward pass accumulates both contributions.  The
solver is projected gradient descent with a Barzilai-Borwein step and
Armijo backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, IndivisibleStep, NoConvergence, NonFinite
from .model import DelayedProblem, Solution
from .trajectory import Trajectory


@dataclass(frozen=True)
class DiscreteProblem:
    """Euler discretization with frozen history samples."""

    problem: DelayedProblem
    M: int
    dt: float
    dr: int
    ds: int

    @property
    def times(self) -> np.ndarray:
        return self.problem.a + self.dt * np.arange(self.M + 1)

    def x_history(self, j: int) -> np.ndarray:
        """phi sample for a negative state index j < 0."""
        return np.atleast_1d(np.asarray(
            self.problem.phi(self.problem.a + self.dt * j), dtype=float))

    def u_history(self, j: int) -> np.ndarray:
        """psi sample for a negative control index j < 0."""
        return np.atleast_1d(np.asarray(
            self.problem.psi(self.problem.a + self.dt * j), dtype=float))


def _exact_multiple(value: float, dt: float, name: str) -> int:
    q = value / dt
    j = int(round(q))
    if abs(q - j) > 1e-9 * max(1.0, abs(q)):
        raise IndivisibleStep(
            f"subinterval length {dt!r} does not divide the {name} delay {value!r}")
    return j


def discretize(problem: DelayedProblem, M: int) -> DiscreteProblem:
    """Split [a, b] into M Euler subintervals; dt must divide both delays."""
    if M < 1:
        raise ValueError("M must be positive")
    dt = (problem.b - problem.a) / M
    dr = _exact_multiple(problem.r, dt, "state")
    ds = _exact_multiple(problem.s, dt, "control")
    return DiscreteProblem(problem=problem, M=M, dt=dt, dr=dr, ds=ds)


def rollout(dp: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """Forward Euler state samples x_0..x_M for control samples u_0..u_{M-1}."""
    p = dp.problem
    M, dt, dr, ds = dp.M, dp.dt, dp.dr, dp.ds
    u = np.asarray(u, dtype=float).reshape(M, p.m)
    ts = dp.times
    x = np.empty((M + 1, p.n))
    x[0] = np.atleast_1d(p.phi(p.a))
    for j in range(M):
        t = ts[j]
        xd = x[j - dr] if j - dr >= 0 else dp.x_history(j - dr)
        ud = u[j - ds] if j - ds >= 0 else dp.u_history(j - ds)
        x[j + 1] = x[j] + dt * (p.A(t) @ x[j] + p.A_D(t) @ xd
                                + np.atleast_1d(p.g(t, u[j]))
                                + np.atleast_1d(p.g_D(t, ud)))
        if not np.all(np.isfinite(x[j + 1])):
            raise NonFinite(f"Euler rollout non-finite at step {j + 1}")
    return x


def discrete_cost(dp: DiscreteProblem, u: np.ndarray,
                  x: np.ndarray | None = None) -> float:
    """Left Riemann sum of the running cost along the Euler rollout."""
    p = dp.problem
    M, dt, dr, ds = dp.M, dp.dt, dp.dr, dp.ds
    u = np.asarray(u, dtype=float).reshape(M, p.m)
    if x is None:
        x = rollout(dp, u)
    ts = dp.times
    total = 0.0
    for j in range(M):
        t = ts[j]
        xd = x[j - dr] if j - dr >= 0 else dp.x_history(j - dr)
        ud = u[j - ds] if j - ds >= 0 else dp.u_history(j - ds)
        total += float(p.f0(t, x[j], xd)) + float(p.g0(t, u[j], ud))
    return dt * total


def gradient(dp: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """Exact gradient of the discrete cost in all control samples.

    One backward pass of the discrete adjoint; matches central finite
    differences to roundoff for smooth problem data.
    """
    return cost_and_gradient(dp, u)[1]


def cost_and_gradient(dp: DiscreteProblem, u: np.ndarray) -> tuple[float, np.ndarray]:
    p = dp.problem
    M, dt, dr, ds = dp.M, dp.dt, dp.dr, dp.ds
    n, m = p.n, p.m
    u = np.asarray(u, dtype=float).reshape(M, m)
    x = rollout(dp, u)
    ts = dp.times
    cost = discrete_cost(dp, u, x=x)

    def xdel(j):
        return x[j - dr] if j - dr >= 0 else dp.x_history(j - dr)

    def udel(j):
        return u[j - ds] if j - ds >= 0 else dp.u_history(j - ds)

    # adjoint of the state recursion: pbar[j] = d(cost)/d(x_j)
    pbar = np.zeros((M + 1, n))
    for j in range(M - 1, 0, -1):
        t = ts[j]
        acc = dt * np.atleast_1d(np.asarray(p.d2_f0(t, x[j], xdel(j)), dtype=float)).copy()
        acc += pbar[j + 1] + dt * (np.asarray(p.A(t), dtype=float).T @ pbar[j + 1])
        if j + dr <= M - 1:
            t_adv = ts[j + dr]
            acc += dt * np.atleast_1d(p.d3_f0(t_adv, x[j + dr], x[j]))
            acc += dt * (np.asarray(p.A_D(t_adv), dtype=float).T @ pbar[j + dr + 1])
        pbar[j] = acc

    grad = np.empty((M, m))
    for j in range(M):
        t = ts[j]
        gj = dt * np.atleast_1d(np.asarray(p.d2_g0(t, u[j], udel(j)), dtype=float)).copy()
        gj += dt * (np.asarray(p.du_g(t, u[j]), dtype=float).T @ pbar[j + 1])
        if j + ds <= M - 1:
            t_adv = ts[j + ds]
            gj += dt * np.atleast_1d(p.d3_g0(t_adv, u[j + ds], u[j]))
            gj += dt * (np.asarray(p.dv_gD(t_adv, u[j]), dtype=float).T @ pbar[j + ds + 1])
        grad[j] = gj
    return cost, grad


def _project(dp: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    region = dp.problem.region
    if region.kind == "all":
        return u
    return np.clip(u, region.lower, region.upper)


def solve_discrete(dp: DiscreteProblem, tol: float = 1e-6, max_iters: int = 2000,
                   u0: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Projected gradient descent with Barzilai-Borwein steps and backtracking.

    Terminates when the projected-gradient sup norm drops below ``tol``.
    Raises :class:`NoConvergence` (carrying the last iterate) at the
    iteration cap.  Deterministic: the default start is u = 0 projected.
    """
    p = dp.problem
    M, m = dp.M, p.m
    u = np.zeros((M, m)) if u0 is None else np.asarray(u0, dtype=float).reshape(M, m)
    u = _project(dp, u)
    cost, grad = cost_and_gradient(dp, u)
    step = 1.0 / max(1.0, float(np.max(np.abs(grad))))
    history = [cost]
    prev_u = prev_grad = None
    for _ in range(max_iters):
        resid = float(np.max(np.abs(u - _project(dp, u - grad))))
        if resid <= tol:
            return u, cost
        if prev_u is not None:
            du = (u - prev_u).ravel()
            dg = (grad - prev_grad).ravel()
            denom = float(du @ dg)
            if denom > 0:
                step = float(du @ du) / denom
            step = float(np.clip(step, 1e-12, 1e6))
        accepted = False
        for _bt in range(60):
            cand = _project(dp, u - step * grad)
            c_cost, c_grad = cost_and_gradient(dp, cand)
            dec = float(grad.ravel() @ (u - cand).ravel())
            if c_cost <= cost - 1e-4 * dec or dec <= 0:
                prev_u, prev_grad = u, grad
                u, cost, grad = cand, c_cost, c_grad
                history.append(cost)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # step collapsed: stationary to machine precision
    resid = float(np.max(np.abs(u - _project(dp, u - grad))))
    if resid <= tol:
        return u, cost
    raise NoConvergence(
        f"projected gradient descent stalled at residual {resid:g} (tol {tol:g})",
        last=(u, cost), history=history)


def solution_from_samples(dp: DiscreteProblem, u: np.ndarray, cost: float,
                          diagnostics: dict | None = None) -> Solution:
    """Package discrete samples as piecewise-linear trajectories."""
    p = dp.problem
    u = np.asarray(u, dtype=float).reshape(dp.M, p.m)
    x = rollout(dp, u)
    ts = dp.times
    # control trajectory holds M samples; extend to the final node with the
    # last sample so the trajectory covers [a, b]
    u_ext = np.vstack([u, u[-1]])
    return Solution(
        state=Trajectory(grid=ts, values=x, interp="linear"),
        control=Trajectory(grid=ts, values=u_ext, interp="linear"),
        adjoint=None,
        cost=float(cost),
        method="transcription",
        diagnostics=diagnostics or {},
    )


def solve_to_solution(problem: DelayedProblem, M: int, tol: float = 1e-6,
                      max_iters: int = 2000) -> Solution:
    dp = discretize(problem, M)
    u, cost = solve_discrete(dp, tol=tol, max_iters=max_iters)
    return solution_from_samples(dp, u, cost,
                                 diagnostics={"M": M, "dt": dp.dt, "dr": dp.dr,
                                              "ds": dp.ds, "tol": tol})


@dataclass(frozen=True)
class ComparisonReport:
    """Gap summary between two solutions on their common grid."""

    cost_gap: float
    control_gap: float
    state_gap: float
    t_lo: float
    t_hi: float
    points: int

    def summary(self) -> str:
        return (f"cost_gap = {self.cost_gap:.12g}\n"
                f"control_sup_gap = {self.control_gap:.12g}\n"
                f"state_sup_gap = {self.state_gap:.12g}\n"
                f"window = [{self.t_lo:.12g}, {self.t_hi:.12g}]\n"
                f"points = {self.points}\n")


def compare(sol_a: Solution, sol_b: Solution) -> ComparisonReport:
    """Sup-norm gaps of control and state plus the cost gap.

    Evaluated on the coarser of the two state grids restricted to the
    overlapping horizon.
    """
    t_lo = max(sol_a.state.t_lo, sol_b.state.t_lo,
               sol_a.control.t_lo, sol_b.control.t_lo)
    t_hi = min(sol_a.state.t_hi, sol_b.state.t_hi,
               sol_a.control.t_hi, sol_b.control.t_hi)
    if t_hi <= t_lo:
        raise CoverageError("solutions do not share a time window")
    grid_a = sol_a.state.grid
    grid_b = sol_b.state.grid
    base = grid_a if len(grid_a) <= len(grid_b) else grid_b
    ts = base[(base >= t_lo) & (base <= t_hi)]
    xa = sol_a.state.eval_many(ts)
    xb = sol_b.state.eval_many(ts)
    ua = sol_a.control.eval_many(ts)
    ub = sol_b.control.eval_many(ts)
    return ComparisonReport(
        cost_gap=abs(sol_a.cost - sol_b.cost),
        control_gap=float(np.max(np.abs(ua - ub))),
        state_gap=float(np.max(np.abs(xa - xb))),
        t_lo=float(ts[0]), t_hi=float(ts[-1]), points=len(ts),
    )


def comparison_table(sol: Solution, ts=None) -> str:
    """Rows ``t,u...,x...`` with 17 significant digits, for external plotting."""
    if ts is None:
        ts = sol.state.grid[(sol.state.grid >= sol.control.t_lo)
                            & (sol.state.grid <= sol.control.t_hi)]
    lines = []
    for t in ts:
        u = sol.control.eval(float(t))
        x = sol.state.eval(float(t))
        lines.append(",".join(f"{v:.17g}" for v in (t, *u, *x)))
    return "\n".join(lines) + "\n"
