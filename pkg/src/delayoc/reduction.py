"""Reduction of the delayed problem to an equivalent non-delayed block system.

Re-indexing time into N windows of length h and stacking the window copies
xi_i(t) = x(t + h*i), theta_i(t) = u(t + h*i) turns the delayed dynamics on
[a, b_tilde] into a non-delayed linear system on the single window [a, a+h]:

    xi'(t) = A_tilde(t) xi(t) + G_tilde(t, theta(t)),
    A_tilde = M + M_D,

where M is block-diagonal in A(t_i), M_D carries A_D(t_i) on the sub-band at
block offset k, and the known history blocks (negative indices, substituted
from phi and psi) move into the forcing G_tilde together with the control
terms.  Window copies are linked by the seam conditions
xi_i(a+h) = xi_{i+1}(a), realized here by solving the windows sequentially
in block order, which is the method of steps in stacked form.

The adjoint of the augmented system, integrated backward block-by-block from
the terminal block's zero condition, maps to the delayed adjoint via
eta(t) = Lambda^j(t - h*j).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .commensurable import CommensurableGrid, grid_for
from .errors import (CoverageError, DimensionMismatch, NoConvergence, NonFinite,
                     OutOfWindow, SeamMismatch)
from .integrate import IntegratorConfig, _composite_weights, evaluate_cost
from .model import DelayedProblem, Solution
from .synthesis import (SweepConfig, _probe_separable, _probe_state_independent,
                        maximize_pointwise)
from .trajectory import Trajectory, interp_arrays


@dataclass(frozen=True)
class AugmentedProblem:
    """Non-delayed block form of a delayed problem on the window [a, a+h]."""

    grid: CommensurableGrid
    base: DelayedProblem
    dim_state: int
    dim_control: int
    A_tilde: Callable
    G_tilde: Callable
    F0: Callable
    G0: Callable
    F0_grad: Callable
    xi_minus: Callable
    theta_minus: Callable
    linkage: tuple
    block_components: Optional[Callable] = None  # (M, M_D, M_D^-) per time

    @property
    def window(self) -> tuple[float, float]:
        return (self.grid.a, self.grid.a + self.grid.h)


def _check_window(aug_or_grid, t: float) -> None:
    grid = aug_or_grid.grid if isinstance(aug_or_grid, AugmentedProblem) else aug_or_grid
    lo, hi = grid.a, grid.a + grid.h
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if t < lo - slack or t > hi + slack:
        raise OutOfWindow(f"time {t!r} outside the reduction window [{lo!r}, {hi!r}]")


def augment(problem: DelayedProblem, grid: CommensurableGrid) -> AugmentedProblem:
    """Assemble the block matrices and stacked integrands of the reduction.

    Block matrices are materialized lazily per time query; nothing of size
    (N n)^2 is stored.  Negative-index blocks are substituted from the
    history functions at assembly time, so the augmented problem is
    self-contained.
    """
    n, m = problem.n, problem.m
    N, k, l, h = grid.N, grid.k, grid.l, grid.h
    a = grid.a

    probe_A = np.asarray(problem.A(a), dtype=float)
    probe_AD = np.asarray(problem.A_D(a), dtype=float)
    probe_g = np.atleast_1d(np.asarray(problem.g(a, np.zeros(m)), dtype=float))
    probe_gD = np.atleast_1d(np.asarray(problem.g_D(a, np.zeros(m)), dtype=float))
    probe_phi = np.atleast_1d(np.asarray(problem.phi(a), dtype=float))
    for name, arr, want in (("A", probe_A, (n, n)), ("A_D", probe_AD, (n, n)),
                            ("g", probe_g, (n,)), ("g_D", probe_gD, (n,)),
                            ("phi", probe_phi, (n,))):
        if arr.shape != want:
            raise DimensionMismatch(f"{name} returned shape {arr.shape}, expected {want}")
    if problem.s > 0:
        probe_psi = np.atleast_1d(np.asarray(problem.psi(a - problem.s), dtype=float))
        if probe_psi.shape != (m,):
            raise DimensionMismatch(f"psi returned shape {probe_psi.shape}, expected ({m},)")

    def t_i(t: float, i: int) -> float:
        return t + h * i

    def xi_minus(t: float) -> np.ndarray:
        out = np.empty(k * n)
        for j in range(k):
            out[j * n:(j + 1) * n] = np.atleast_1d(problem.phi(t_i(t, j - k)))
        return out

    def theta_minus(t: float) -> np.ndarray:
        out = np.empty(l * m)
        for j in range(l):
            out[j * m:(j + 1) * m] = np.atleast_1d(problem.psi(t_i(t, j - l)))
        return out

    def block_components(t: float):
        """(M, M_D, M_D_minus) at local time t, each (N n, N n)."""
        _check_window(grid, t)
        M = np.zeros((N * n, N * n))
        MD = np.zeros((N * n, N * n))
        MDm = np.zeros((N * n, N * n))
        for i in range(N):
            ti = t_i(t, i)
            M[i * n:(i + 1) * n, i * n:(i + 1) * n] = problem.A(ti)
            if i >= k:
                MD[i * n:(i + 1) * n, (i - k) * n:(i - k + 1) * n] = problem.A_D(ti)
            else:
                MDm[i * n:(i + 1) * n, i * n:(i + 1) * n] = problem.A_D(ti)
        return M, MD, MDm

    def A_tilde(t: float) -> np.ndarray:
        M, MD, _ = block_components(t)
        return M + MD

    def G_tilde(t: float, theta: np.ndarray) -> np.ndarray:
        _check_window(grid, t)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (N * m,):
            raise DimensionMismatch(
                f"stacked control has shape {theta.shape}, expected ({N * m},)")
        out = np.empty(N * n)
        for i in range(N):
            ti = t_i(t, i)
            row = np.atleast_1d(np.asarray(
                problem.g(ti, theta[i * m:(i + 1) * m]), dtype=float)).copy()
            if i >= l:
                row += np.atleast_1d(problem.g_D(ti, theta[(i - l) * m:(i - l + 1) * m]))
            else:
                row += np.atleast_1d(problem.g_D(ti, np.atleast_1d(problem.psi(t_i(t, i - l)))))
            if i < k:
                row += np.asarray(problem.A_D(ti)) @ np.atleast_1d(problem.phi(t_i(t, i - k)))
            out[i * n:(i + 1) * n] = row
        return out

    def F0(t: float, xi: np.ndarray) -> float:
        xi = np.asarray(xi, dtype=float)
        total = 0.0
        for i in range(N):
            xi_i = xi[i * n:(i + 1) * n]
            xi_del = (xi[(i - k) * n:(i - k + 1) * n] if i >= k
                      else np.atleast_1d(problem.phi(t_i(t, i - k))))
            total += float(problem.f0(t_i(t, i), xi_i, xi_del))
        return total

    def G0(t: float, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        total = 0.0
        for i in range(N):
            th_i = theta[i * m:(i + 1) * m]
            th_del = (theta[(i - l) * m:(i - l + 1) * m] if i >= l
                      else np.atleast_1d(problem.psi(t_i(t, i - l))))
            total += float(problem.g0(t_i(t, i), th_i, th_del))
        return total

    def F0_grad(t: float, xi: np.ndarray) -> np.ndarray:
        """Gradient of F0 in the stacked state, block by block."""
        xi = np.asarray(xi, dtype=float)
        out = np.empty(N * n)
        for i in range(N):
            xi_i = xi[i * n:(i + 1) * n]
            xi_del = (xi[(i - k) * n:(i - k + 1) * n] if i >= k
                      else np.atleast_1d(problem.phi(t_i(t, i - k))))
            gi = np.atleast_1d(np.asarray(
                problem.d2_f0(t_i(t, i), xi_i, xi_del), dtype=float)).copy()
            if i + k <= N - 1:
                xi_adv = xi[(i + k) * n:(i + k + 1) * n]
                gi += np.atleast_1d(problem.d3_f0(t_i(t, i + k), xi_adv, xi_i))
            out[i * n:(i + 1) * n] = gi
        return out

    return AugmentedProblem(
        grid=grid, base=problem, dim_state=N * n, dim_control=N * m,
        A_tilde=A_tilde, G_tilde=G_tilde, F0=F0, G0=G0, F0_grad=F0_grad,
        xi_minus=xi_minus, theta_minus=theta_minus,
        linkage=tuple((i, i + 1) for i in range(N - 1)),
        block_components=block_components,
    )


def evaluate_block_A(aug: AugmentedProblem, t: float) -> np.ndarray:
    """Dense A_tilde(t) = M(t) + M_D(t); raises OutOfWindow off the window."""
    out = aug.A_tilde(t)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"A_tilde({t!r}) has non-finite entries")
    return out


def format_block_A(aug: AugmentedProblem, t: float) -> str:
    """Plain-text dense dump of A_tilde(t), row-major, space-separated."""
    mat = evaluate_block_A(aug, t)
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in mat) + "\n"


def _window_layout(x: Trajectory, grid: CommensurableGrid) -> tuple[int, int, float]:
    """(index of node a, substeps per window, step) for an integrator grid."""
    step = float(x.grid[1] - x.grid[0])
    nsub = int(round(grid.h / step))
    if nsub < 1 or abs(grid.h / step - nsub) > 1e-9 * max(1.0, grid.h / step):
        raise CoverageError("trajectory sampling does not align with the window step")
    i_a = int(np.searchsorted(x.grid, grid.a))
    if i_a >= len(x.grid) or x.grid[i_a] != grid.a:
        i_a = int(np.argmin(np.abs(x.grid - grid.a)))
        if abs(x.grid[i_a] - grid.a) > 1e-9 * max(1.0, abs(grid.a)):
            raise CoverageError("trajectory grid does not contain the window start")
    return i_a, nsub, step


def lift_trajectories(x: Trajectory, u: Trajectory,
                      grid: CommensurableGrid) -> tuple[Trajectory, Trajectory]:
    """Stack x and u into window copies xi_i(t) = x(t + h i), theta_i = u(t + h i).

    Inputs must be sampled on step grids aligned with the window (the
    integrators produce these); stacking is by index, so shared nodes are
    exact.
    """
    i_a, nsub, step = _window_layout(x, grid)
    j_a, nsub_u, _ = _window_layout(u, grid)
    if nsub_u != nsub:
        raise CoverageError("state and control sampling steps differ")
    N = grid.N
    if i_a + N * nsub >= len(x.grid):
        raise CoverageError("state trajectory does not span [a, b_tilde]")
    if j_a + N * nsub >= len(u.grid):
        raise CoverageError("control trajectory does not span [a, b_tilde]")
    local = x.grid[i_a:i_a + nsub + 1]
    xi = np.empty((nsub + 1, N * x.dim))
    th = np.empty((nsub + 1, N * u.dim))
    for i in range(N):
        xi[:, i * x.dim:(i + 1) * x.dim] = x.values[i_a + i * nsub:i_a + i * nsub + nsub + 1]
        th[:, i * u.dim:(i + 1) * u.dim] = u.values[j_a + i * nsub:j_a + i * nsub + nsub + 1]
    return (Trajectory(grid=local, values=xi, interp=x.interp, block=nsub),
            Trajectory(grid=local, values=th, interp=u.interp, block=nsub))


def flatten_solution(xi: Trajectory, theta: Trajectory, grid: CommensurableGrid,
                     seam_tol: float = 1e-8) -> tuple[Trajectory, Trajectory]:
    """Concatenate window copies back onto the global time axis [a, b_tilde].

    State seams must satisfy the linkage equalities xi_i(a+h) = xi_{i+1}(a)
    within ``seam_tol`` (relative to the state scale); controls take the
    right window's value at seams (controls need not be continuous).
    """
    N = grid.N
    n = xi.dim // N
    m = theta.dim // N
    nsub = len(xi.grid) - 1
    step = float(xi.grid[1] - xi.grid[0])
    total = N * nsub
    times = grid.a + step * np.arange(total + 1)
    xs = np.empty((total + 1, n))
    us = np.empty((total + 1, m))
    scale = max(1.0, float(np.max(np.abs(xi.values))))
    for i in range(N):
        xs[i * nsub:(i + 1) * nsub + 1] = xi.values[:, i * n:(i + 1) * n]
        us[i * nsub:(i + 1) * nsub + 1] = theta.values[:, i * m:(i + 1) * m]
        if i > 0:
            left = xi.values[-1, (i - 1) * n:i * n]
            right = xi.values[0, i * n:(i + 1) * n]
            gap = float(np.max(np.abs(left - right)))
            if gap > seam_tol * scale:
                raise SeamMismatch(
                    f"state seam between windows {i - 1} and {i} differs by {gap:g}")
    return (Trajectory(grid=times, values=xs, interp=xi.interp, block=nsub),
            Trajectory(grid=times, values=us, interp=theta.interp, block=nsub))


def map_adjoint(Lambda: Trajectory, grid: CommensurableGrid,
                seam_tol: float = 1e-8) -> Trajectory:
    """Map the stacked adjoint onto the delayed axis: eta(t) = Lambda^j(t - h j).

    At window seams the two candidate values must agree within ``seam_tol``
    (relative); the terminal block supplies eta(b_tilde).
    """
    N = grid.N
    n = Lambda.dim // N
    nsub = len(Lambda.grid) - 1
    step = float(Lambda.grid[1] - Lambda.grid[0])
    total = N * nsub
    times = grid.a + step * np.arange(total + 1)
    eta = np.empty((total + 1, n))
    scale = max(1.0, float(np.max(np.abs(Lambda.values))))
    for j in range(N):
        eta[j * nsub:(j + 1) * nsub + 1] = Lambda.values[:, j * n:(j + 1) * n]
        if j > 0:
            left = Lambda.values[-1, (j - 1) * n:j * n]
            right = Lambda.values[0, j * n:(j + 1) * n]
            gap = float(np.max(np.abs(left - right)))
            if gap > seam_tol * scale:
                raise SeamMismatch(
                    f"adjoint seam between blocks {j - 1} and {j} differs by {gap:g}")
    return Trajectory(grid=times, values=eta, interp=Lambda.interp, block=nsub)


def _window_nodes(grid: CommensurableGrid, nsub: int, step: float) -> np.ndarray:
    return grid.a + step * np.arange(nsub + 1)


def integrate_augmented(aug: AugmentedProblem, theta: Trajectory,
                        cfg: IntegratorConfig, mode: str = "chained",
                        xi_start: np.ndarray | None = None) -> Trajectory:
    """Integrate the augmented system over the window with the given controls.

    ``chained`` resolves the linkage sequentially: window copies are
    integrated in block order, each starting from the previous block's
    endpoint, with cross-block terms read from the stored earlier blocks.
    ``coupled`` integrates the full (N n)-dimensional system in one pass
    through the dense A_tilde/G_tilde assembly and needs the stacked initial
    value ``xi_start``.
    """
    problem = aug.base
    grid = aug.grid
    N, k, l, h = grid.N, grid.k, grid.l, grid.h
    n, m = problem.n, problem.m
    nsub = cfg.substeps(h)
    step = cfg.step
    a = grid.a
    nodes = _window_nodes(grid, nsub, step)
    interp = cfg.interp

    def theta_at(t: float, i: int) -> np.ndarray:
        vec = interp_arrays(theta.grid, theta.values, t, theta.interp,
                            block=theta.block)
        return vec[i * m:(i + 1) * m]

    if mode == "coupled":
        if xi_start is None:
            raise ValueError("coupled mode needs the stacked initial value xi_start")
        y = np.asarray(xi_start, dtype=float).copy()
        if y.shape != (N * n,):
            raise DimensionMismatch(f"xi_start has shape {y.shape}, expected ({N * n},)")
        vals = np.empty((nsub + 1, N * n))
        vals[0] = y

        def rhs(tt, yy):
            full = interp_arrays(theta.grid, theta.values, tt, theta.interp,
                                 block=theta.block)
            return aug.A_tilde(tt) @ yy + aug.G_tilde(tt, full)

        for j in range(nsub):
            t0, t1 = nodes[j], nodes[j + 1]
            tm = t0 + 0.5 * step
            y = vals[j]
            if cfg.scheme == "euler":
                ynew = y + step * rhs(t0, y)
            else:
                k1 = rhs(t0, y)
                k2 = rhs(tm, y + 0.5 * step * k1)
                k3 = rhs(tm, y + 0.5 * step * k2)
                k4 = rhs(t1, y + step * k3)
                ynew = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(ynew)):
                raise NonFinite(f"augmented integration non-finite at t={t1!r}")
            vals[j + 1] = ynew
        return Trajectory(grid=nodes, values=vals, interp=interp, block=nsub)

    if mode != "chained":
        raise ValueError("mode must be 'chained' or 'coupled'")

    blocks = np.empty((N, nsub + 1, n))

    def block_lookup(i: int, idx: float, t: float) -> np.ndarray:
        """Value of the (already completed) block i at fractional index idx."""
        jj = int(round(idx))
        if idx == jj:
            return blocks[i, jj]
        return interp_arrays(nodes, blocks[i], t, interp)

    for i in range(N):
        start = (np.atleast_1d(np.asarray(problem.phi(a), dtype=float)) if i == 0
                 else blocks[i - 1, nsub])
        blocks[i, 0] = start
        ti0 = h * i

        def rhs(tt, yy, idx):
            t_loc = tt  # local window time
            t_glob = t_loc + ti0
            if k == 0:
                xi_del = yy
            elif i < k:
                xi_del = np.atleast_1d(problem.phi(t_loc + h * (i - k)))
            else:
                xi_del = block_lookup(i - k, idx, t_loc)
            if i < l:
                u_del = np.atleast_1d(problem.psi(t_loc + h * (i - l)))
            else:
                u_del = theta_at(t_loc, i - l)
            return problem.A(t_glob) @ yy + problem.A_D(t_glob) @ xi_del \
                + np.atleast_1d(problem.g(t_glob, theta_at(t_loc, i))) \
                + np.atleast_1d(problem.g_D(t_glob, u_del))

        for j in range(nsub):
            t0, t1 = nodes[j], nodes[j + 1]
            tm = t0 + 0.5 * step
            y = blocks[i, j]
            if cfg.scheme == "euler":
                ynew = y + step * rhs(t0, y, float(j))
            else:
                k1 = rhs(t0, y, float(j))
                k2 = rhs(tm, y + 0.5 * step * k1, j + 0.5)
                k3 = rhs(tm, y + 0.5 * step * k2, j + 0.5)
                k4 = rhs(t1, y + step * k3, float(j + 1))
                ynew = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(ynew)):
                raise NonFinite(f"augmented window {i} non-finite at t={t1!r}")
            blocks[i, j + 1] = ynew

    vals = np.empty((nsub + 1, N * n))
    for i in range(N):
        vals[:, i * n:(i + 1) * n] = blocks[i]
    return Trajectory(grid=nodes, values=vals, interp=interp, block=nsub)


def integrate_augmented_adjoint(aug: AugmentedProblem, xi: Trajectory,
                                cfg: IntegratorConfig) -> Trajectory:
    """Backward block-chained adjoint of the augmented system.

    Blocks integrate in descending order: block N-1 starts from the zero
    terminal condition (the free-endpoint transversality), block i starts
    from block i+1's value at the window start, and the advanced coupling
    Lambda^{i+k} reads already-computed blocks at the same local time.
    """
    problem = aug.base
    grid = aug.grid
    N, k, h = grid.N, grid.k, grid.h
    n = problem.n
    nsub = cfg.substeps(h)
    step = cfg.step
    nodes = _window_nodes(grid, nsub, step)
    interp = cfg.interp

    def xi_block(i: int, t: float) -> np.ndarray:
        vec = interp_arrays(xi.grid, xi.values, t, xi.interp, block=xi.block)
        return vec[i * n:(i + 1) * n]

    lambdas = np.zeros((N, nsub + 1, n))
    for i in range(N - 1, -1, -1):
        lambdas[i, nsub] = 0.0 if i == N - 1 else lambdas[i + 1, 0]
        ti0 = h * i
        advanced = (i + k <= N - 1) and k > 0

        def lam_adv(idx: float, yy: np.ndarray, t: float) -> np.ndarray:
            if k == 0:
                return yy
            jj = int(round(idx))
            if idx == jj:
                return lambdas[i + k, jj]
            return interp_arrays(nodes, lambdas[i + k], t, interp)

        def rhs(tt, yy, idx):
            t_glob = tt + ti0
            xi_i = xi_block(i, tt)
            xi_del = (xi_block(i - k, tt) if i >= k and k > 0
                      else (xi_i if k == 0
                            else np.atleast_1d(problem.phi(tt + h * (i - k)))))
            val = np.atleast_1d(np.asarray(
                problem.d2_f0(t_glob, xi_i, xi_del), dtype=float)).copy()
            val -= yy @ problem.A(t_glob)
            if advanced or k == 0:
                t_adv = t_glob + h * k
                xi_adv = xi_block(i + k, tt) if k > 0 else xi_i
                val += np.atleast_1d(problem.d3_f0(t_adv, xi_adv, xi_i))
                val -= lam_adv(idx, yy, tt) @ problem.A_D(t_adv)
            return val

        for j in range(nsub, 0, -1):
            t0, t1 = nodes[j], nodes[j - 1]
            tm = t0 - 0.5 * step
            y = lambdas[i, j]
            if cfg.scheme == "euler":
                ynew = y - step * rhs(t0, y, float(j))
            else:
                k1 = rhs(t0, y, float(j))
                k2 = rhs(tm, y - 0.5 * step * k1, j - 0.5)
                k3 = rhs(tm, y - 0.5 * step * k2, j - 0.5)
                k4 = rhs(t1, y - step * k3, float(j - 1))
                ynew = y - (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(ynew)):
                raise NonFinite(f"augmented adjoint block {i} non-finite at t={t1!r}")
            lambdas[i, j - 1] = ynew

    vals = np.empty((nsub + 1, N * n))
    for i in range(N):
        vals[:, i * n:(i + 1) * n] = lambdas[i]
    return Trajectory(grid=nodes, values=vals, interp=interp, block=nsub)


def augmented_cost(aug: AugmentedProblem, xi: Trajectory, theta: Trajectory,
                   cfg: IntegratorConfig) -> float:
    """Quadrature of F0 + G0 over the window; equals the delayed cost on
    [a, b_tilde] by the reduction's change of variables."""
    nsub = cfg.substeps(aug.grid.h)
    nodes = _window_nodes(aug.grid, nsub, cfg.step)
    vals = np.empty(nsub + 1)
    for i, t in enumerate(nodes):
        vals[i] = aug.F0(float(t), xi.eval(float(t))) \
            + aug.G0(float(t), theta.eval(float(t)))
    w = _composite_weights(nsub, cfg.quadrature, cfg.step)
    return float(w @ vals)


def _state_with_history(problem: DelayedProblem, x_flat: Trajectory,
                        grid: CommensurableGrid, cfg: IntegratorConfig) -> Trajectory:
    """Prepend the phi samples so delayed lookups on [a-r, a) resolve."""
    nsub = cfg.substeps(grid.h)
    hist = grid.k * nsub
    if hist == 0:
        return x_flat
    step = cfg.step
    pre_times = problem.a + step * np.arange(-hist, 0)
    pre_vals = np.array([np.atleast_1d(problem.phi(float(t))) for t in pre_times])
    return Trajectory(
        grid=np.concatenate([pre_times, x_flat.grid]),
        values=np.vstack([pre_vals, x_flat.values]),
        interp=x_flat.interp, block=nsub)


def solve_augmented(problem: DelayedProblem, cfg: SweepConfig | None = None,
                    icfg: IntegratorConfig | None = None,
                    grid: CommensurableGrid | None = None) -> Solution:
    """Solve through the reduction: block-chained propagation on the window.

    Same fixed-point structure as the direct sweep, but state and adjoint are
    produced by integrating the augmented block system and mapping back
    (flatten for the state, Lambda -> eta for the adjoint).  Exercises the
    assembled block machinery end to end.
    """
    cfg = cfg or SweepConfig()
    icfg = icfg or IntegratorConfig()
    grid = grid or grid_for(problem)
    aug = augment(problem, grid)
    nsub = icfg.substeps(grid.h)
    step = icfg.step
    total = grid.N * nsub
    nodes = problem.a + step * np.arange(total + 1)
    m = problem.m
    b_end = grid.b_tilde

    rng = np.random.default_rng(0)
    state_indep = _probe_state_independent(problem, rng)
    separable = _probe_separable(problem, rng)
    single_pass = state_indep and separable
    lam = cfg.relaxation if cfg.relaxation is not None else (1.0 if state_indep else 0.5)

    u = Trajectory(grid=nodes,
                   values=np.tile(problem.region.project(np.zeros(m)), (len(nodes), 1)),
                   interp=icfg.interp, block=nsub)
    changes: list[float] = []
    converged = False
    iterations = 0
    x_full = None
    eta = None
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        _, theta = lift_trajectories_from_control(u, grid, nsub)
        xi = integrate_augmented(aug, theta, icfg, mode="chained")
        x_flat, _ = flatten_solution(xi, theta, grid)
        x_full = _state_with_history(problem, x_flat, grid, icfg)
        Lam = integrate_augmented_adjoint(aug, xi, icfg)
        eta = map_adjoint(Lam, grid)
        new_vals = np.empty((len(nodes), m))
        for i, t in enumerate(nodes):
            new_vals[i] = maximize_pointwise(float(t), x_full, u, eta, problem,
                                             maximizer=cfg.maximizer, b_end=b_end)
        blended = (1.0 - lam) * u.values + lam * new_vals
        delta = float(np.max(np.abs(blended - u.values)))
        u = Trajectory(grid=nodes, values=blended, interp=icfg.interp, block=nsub)
        changes.append(delta)
        if single_pass or delta <= cfg.control_tol:
            converged = True
            break

    _, theta = lift_trajectories_from_control(u, grid, nsub)
    xi = integrate_augmented(aug, theta, icfg, mode="chained")
    x_flat, _ = flatten_solution(xi, theta, grid)
    x_full = _state_with_history(problem, x_flat, grid, icfg)
    Lam = integrate_augmented_adjoint(aug, xi, icfg)
    eta = map_adjoint(Lam, grid)
    cost = evaluate_cost(problem, x_full, u, icfg)
    diagnostics = {
        "iterations": iterations,
        "converged": converged,
        "control_changes": changes,
        "state_independent_adjoint": state_indep,
        "separable_running_cost": separable,
        "single_pass": single_pass,
        "relaxation": lam,
        "scheme": icfg.scheme,
        "step": icfg.step,
        "grid": {"h": grid.h, "k": grid.k, "l": grid.l, "N": grid.N,
                 "b_tilde": grid.b_tilde, "strict_ok": grid.strict_ok},
    }
    solution = Solution(state=x_full, control=u, adjoint=eta, cost=cost,
                        method="augmented", diagnostics=diagnostics)
    if not converged:
        raise NoConvergence(
            f"augmented solve did not converge within {cfg.max_iters} iterations",
            last=solution, history=changes)
    return solution


def lift_trajectories_from_control(u: Trajectory, grid: CommensurableGrid,
                                   nsub: int) -> tuple[None, Trajectory]:
    """Stack only the control (no state available yet) into window copies."""
    N = grid.N
    m = u.dim
    local = u.grid[:nsub + 1]
    th = np.empty((nsub + 1, N * m))
    for i in range(N):
        th[:, i * m:(i + 1) * m] = u.values[i * nsub:i * nsub + nsub + 1]
    return None, Trajectory(grid=local, values=th, interp=u.interp, block=nsub)
