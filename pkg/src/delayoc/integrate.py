"""Fixed-step integration of the delayed dynamics and the advanced adjoint.

Both directions use the method of steps: the step size divides the common
delay step h, so every delayed or advanced lookup of a *node* lands exactly
on an earlier (state) or later (adjoint) node and is resolved by index
arithmetic, never by interpolation.  Runge-Kutta stage midpoints fall between
nodes and interpolate the already-computed buffer with the scheme-matched
rule (linear for Euler, cubic for RK4).

Branch selection at the history boundary follows the step interior: while
integrating the step (t_j, t_{j+1}), a delayed control lookup that lands
exactly on t = a resolves to the history function psi whenever the step's
delayed interval lies left of a.  Evaluating the jump's right value at a step
endpoint instead would inject an O(step) error at that single step, which is
the classic breakpoint artifact of sampled delay equations.  Pointwise APIs
(`adjoint_rhs`, cost quadrature) use the literal closed-interval conventions:
ties at t = a belong to the trajectory and the advanced indicator includes
t = b - r.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .commensurable import CommensurableGrid, grid_for
from .errors import CoverageError, NonFinite
from .model import DelayedProblem
from .trajectory import Trajectory, interp_arrays, uniform_midpoints

SCHEMES = ("euler", "rk4")
QUADRATURES = ("riemann", "trapezoid", "simpson")

# trajectory interpolation matched to scheme order
_SCHEME_INTERP = {"euler": "linear", "rk4": "cubic"}


@dataclass(frozen=True)
class IntegratorConfig:
    """Scheme, step and quadrature for the fixed-step pipeline.

    The step must divide the common delay step h exactly (1e-9 relative),
    so delayed indices hit grid nodes without interpolation error.
    """

    scheme: str = "rk4"
    step: float = 1e-3
    quadrature: str = "simpson"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}")
        if not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def interp(self) -> str:
        return _SCHEME_INTERP[self.scheme]

    def substeps(self, h: float) -> int:
        q = h / self.step
        nsub = int(round(q))
        if nsub < 1 or abs(q - nsub) > 1e-9 * max(1.0, q):
            raise ValueError(
                f"step {self.step!r} must divide the delay step h={h!r} exactly")
        return nsub


def _node_times(a: float, step: float, lo_idx: int, hi_idx: int) -> np.ndarray:
    """Times a + j*step for j in [lo_idx, hi_idx], built once for bitwise reuse."""
    return a + step * np.arange(lo_idx, hi_idx + 1, dtype=float)


class _ControlLookup:
    """Delayed-control evaluation with history branch selection.

    ``psi`` owns [a-s, a); the trajectory owns [a, ...].  A query exactly at
    ``a`` resolves to psi only when the caller marks the active step as lying
    left of the boundary in delayed time.
    """

    def __init__(self, problem: DelayedProblem, u: Trajectory):
        self.a = problem.a
        self.psi = problem.psi
        self.u = u

    def __call__(self, t: float, left_of_boundary: bool = False) -> np.ndarray:
        if t < self.a or (t == self.a and left_of_boundary):
            return np.atleast_1d(np.asarray(self.psi(t), dtype=float))
        return interp_arrays(self.u.grid, self.u.values, t, self.u.interp,
                             block=self.u.block)


def integrate_state(problem: DelayedProblem, u: Trajectory, cfg: IntegratorConfig,
                    t_end: float | None = None,
                    grid: CommensurableGrid | None = None) -> Trajectory:
    """Forward method-of-steps integration of the delayed dynamics.

    Returns the state on [a-r, min(t_end, b_tilde)] with the history segment
    filled from phi.  The recursion is causal: node j+1 depends only on nodes
    <= j, so integrating to an intermediate t_end and to b_tilde produce
    bitwise-identical shared prefixes.
    """
    grid = grid or grid_for(problem)
    nsub = cfg.substeps(grid.h)
    step = cfg.step
    a = problem.a
    n = problem.n
    k_off = grid.k * nsub      # state delay in step units
    l_off = grid.l * nsub      # control delay in step units
    total = grid.N * nsub
    if t_end is not None:
        q = (t_end - a) / step
        total = min(total, int(round(q)))
        if total < 1 or abs(q - round(q)) > 1e-9 * max(1.0, abs(q)):
            raise ValueError("t_end must be a node time past the start")
    if not u.covers(a, a + step * total):
        raise CoverageError("control trajectory does not span the solve window")

    hist = k_off
    times = _node_times(a, step, -hist, total)
    xs = np.empty((hist + total + 1, n))
    for i in range(hist + 1):
        xs[i] = np.atleast_1d(np.asarray(problem.phi(times[i]), dtype=float))
    if not np.all(np.isfinite(xs[:hist + 1])):
        raise NonFinite("history function phi produced non-finite samples")

    A, A_D, g, g_D = problem.A, problem.A_D, problem.g, problem.g_D
    r_zero = grid.k == 0
    interp = cfg.interp
    euler = cfg.scheme == "euler"

    # control samples at the solve nodes (and, for RK4, at cell midpoints)
    # are y-independent: tabulate them once
    ulook = _ControlLookup(problem, u)
    U_nodes = _aligned_node_values(u, times[hist:], total)
    if U_nodes is None:
        U_nodes = np.stack([ulook(float(times[hist + i]), False)
                            for i in range(total + 1)])
    U_mids = None
    if not euler:
        U_mids = _midpoint_values(u, U_nodes, nsub, ulook, times[hist:])
    psi_v = problem.psi
    m = problem.m

    def psi_at(t):
        return np.atleast_1d(np.asarray(psi_v(t), dtype=float))

    # u(t - s) tables: negative indices resolve to the history function
    if l_off == 0:
        Ud_nodes, Ud_mids = U_nodes, U_mids
    else:
        Ud_nodes = np.empty((total + 1, m))
        Ud_nodes[:min(l_off, total + 1)] = np.stack(
            [psi_at(float(times[hist + i]) - problem.s)
             for i in range(min(l_off, total + 1))])
        if l_off <= total:
            Ud_nodes[l_off:] = U_nodes[:total + 1 - l_off]
        if not euler:
            Ud_mids = np.empty((total, m))
            Ud_mids[:min(l_off, total)] = np.stack(
                [psi_at(float(times[hist + i]) + 0.5 * step - problem.s)
                 for i in range(min(l_off, total))])
            if l_off < total:
                Ud_mids[l_off:] = U_mids[:total - l_off]
    # the step arriving exactly at the history boundary takes psi's left limit
    psi_left_at_a = psi_at(a) if 1 <= l_off <= total else None

    def x_mid(idx: float, filled: int) -> np.ndarray:
        """State at a half-node index (history queried through phi exactly)."""
        if idx < hist:
            return np.atleast_1d(np.asarray(
                problem.phi(a + step * (idx - hist)), dtype=float))
        t = times[0] + step * idx
        return interp_arrays(times, xs, t, interp, hi=filled, block=nsub)

    one6 = step / 6.0
    half = 0.5 * step
    for j in range(total):
        base = hist + j
        t0 = times[base]
        t1 = times[base + 1]
        y = xs[base]
        forc0 = np.atleast_1d(np.asarray(g(t0, U_nodes[j]), dtype=float)) \
            + np.atleast_1d(np.asarray(g_D(t0, Ud_nodes[j]), dtype=float))
        if euler:
            xd0 = y if r_zero else xs[base - k_off]
            ynew = y + step * (A(t0) @ y + A_D(t0) @ xd0 + forc0)
        else:
            tm = t0 + half
            ud1 = (psi_left_at_a if j + 1 == l_off else Ud_nodes[j + 1])
            forcm = np.atleast_1d(np.asarray(g(tm, U_mids[j]), dtype=float)) \
                + np.atleast_1d(np.asarray(g_D(tm, Ud_mids[j]), dtype=float))
            forc1 = np.atleast_1d(np.asarray(g(t1, U_nodes[j + 1]), dtype=float)) \
                + np.atleast_1d(np.asarray(g_D(t1, ud1), dtype=float))
            A0, Am, A1 = A(t0), A(tm), A(t1)
            D0, Dm, D1 = A_D(t0), A_D(tm), A_D(t1)
            if r_zero:
                k1 = A0 @ y + D0 @ y + forc0
                y2 = y + half * k1
                k2 = Am @ y2 + Dm @ y2 + forcm
                y3 = y + half * k2
                k3 = Am @ y3 + Dm @ y3 + forcm
                y4 = y + step * k3
                k4 = A1 @ y4 + D1 @ y4 + forc1
            else:
                xd0 = xs[base - k_off]
                xdm = x_mid(base + 0.5 - k_off, base + 1)
                xd1 = xs[base + 1 - k_off]
                k1 = A0 @ y + D0 @ xd0 + forc0
                k2 = Am @ (y + half * k1) + Dm @ xdm + forcm
                k3 = Am @ (y + half * k2) + Dm @ xdm + forcm
                k4 = A1 @ (y + step * k3) + D1 @ xd1 + forc1
            ynew = y + one6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(ynew)):
            raise NonFinite(f"state integration produced non-finite values at t={t1!r}")
        xs[base + 1] = ynew

    return Trajectory(grid=times, values=xs, interp=interp, block=nsub)


def _aligned_node_values(traj: Trajectory, node_times: np.ndarray,
                         total: int) -> np.ndarray | None:
    """Trajectory samples at the given nodes by pure slicing, when its grid
    contains them bitwise; None when not aligned."""
    q0 = int(np.searchsorted(traj.grid, node_times[0]))
    if q0 + total >= len(traj.grid):
        return None
    if not np.array_equal(traj.grid[q0:q0 + total + 1], node_times[:total + 1]):
        return None
    return traj.values[q0:q0 + total + 1]


def _midpoint_values(traj: Trajectory, nodes: np.ndarray, nsub: int,
                     lookup, node_times: np.ndarray) -> np.ndarray:
    """Trajectory samples at cell midpoints of the solve grid.

    Uses the vectorized window-clamped resampler when the solve nodes are
    the trajectory's own samples with matching windows; otherwise falls back
    to pointwise evaluation.
    """
    total = len(nodes) - 1
    aligned = _aligned_node_values(traj, node_times, total)
    if aligned is not None and traj.block == nsub and total % nsub == 0:
        start = int(np.searchsorted(traj.grid, node_times[0]))
        if start % nsub == 0:
            # the slice is a whole number of smooth windows: vectorized path
            # reproduces the pointwise window-clamped stencils
            return uniform_midpoints(nodes, traj.interp, block=nsub)
    step = float(node_times[1] - node_times[0])
    return np.stack([lookup(float(node_times[i]) + 0.5 * step, False)
                     for i in range(total)])


def adjoint_rhs(problem: DelayedProblem, x: Trajectory, eta_t: np.ndarray,
                eta_adv: np.ndarray | None, t: float, b_end: float) -> np.ndarray:
    """Right-hand side of the advanced-argument adjoint equation at time t.

    ``eta_adv`` is eta(t+r) and may be None when the advanced indicator is
    off.  The indicator uses the literal closed-interval rule: the advanced
    terms are included iff t <= b_end - r.
    """
    r = problem.r
    xt = x.eval(t)
    xr = x.eval(t - r)
    out = np.atleast_1d(np.asarray(problem.d2_f0(t, xt, xr), dtype=float)).copy()
    out -= eta_t @ problem.A(t)
    if t <= b_end - r:
        xa = x.eval(t + r)
        out += np.atleast_1d(np.asarray(problem.d3_f0(t + r, xa, xt), dtype=float))
        adv = eta_t if r == 0 else eta_adv
        out -= adv @ problem.A_D(t + r)
    return out


def integrate_adjoint(problem: DelayedProblem, x: Trajectory, cfg: IntegratorConfig,
                      grid: CommensurableGrid | None = None) -> Trajectory:
    """Backward method-of-steps integration of the adjoint from eta(b_tilde)=0.

    On [b_tilde - r, b_tilde] the advanced terms vanish and the equation is
    local; each earlier window reads the already computed eta(t+r).  The
    advanced indicator is resolved per step interior, so the window seams at
    b_tilde - j*r (always grid nodes) never contaminate a Runge-Kutta stage.
    """
    grid = grid or grid_for(problem)
    nsub = cfg.substeps(grid.h)
    step = cfg.step
    a, b_t = problem.a, grid.b_tilde
    n = problem.n
    total = grid.N * nsub
    k_off = grid.k * nsub
    if not x.covers(a - problem.r, b_t):
        raise CoverageError("state trajectory does not span [a-r, b_tilde]")

    times = _node_times(a, step, 0, total)
    eta = np.zeros((total + 1, n))
    interp = cfg.interp
    r_zero = grid.k == 0
    A, A_D = problem.A, problem.A_D
    d2, d3 = problem.d2_f0, problem.d3_f0
    r = problem.r

    euler = cfg.scheme == "euler"

    def eta_advanced(gidx_float: float, y_stage: np.ndarray, lowest: int) -> np.ndarray:
        if r_zero:
            return y_stage
        j = int(round(gidx_float))
        if gidx_float == j:
            return eta[j]
        t = times[0] + step * gidx_float
        return interp_arrays(times, eta, t, interp, lo=max(lowest, 0), block=nsub)

    # state lookups at stage times are y-independent; when x is sampled on
    # the solve layout (the integrators' own output), resolve them by index
    # into its buffer and one vectorized midpoint resample
    xg, xv, xinterp, xblock = x.grid, x.values, x.interp, x.block
    aligned = _aligned_node_values(x, times, total)
    q0 = int(np.searchsorted(xg, times[0])) if aligned is not None else -1
    bulk = (aligned is not None and xblock == nsub and q0 >= k_off
            and q0 % nsub == 0 and (len(xg) - 1) % nsub == 0)
    if bulk and not euler:
        XM = uniform_midpoints(xv, xinterp, block=nsub)

    if bulk:
        def x_idx(fidx: float) -> np.ndarray:
            jj = int(round(2.0 * fidx))
            if jj % 2 == 0:
                return xv[q0 + jj // 2]
            return XM[q0 + (jj - 1) // 2]
    else:
        def x_idx(fidx: float) -> np.ndarray:
            return interp_arrays(xg, xv, times[0] + step * fidx, xinterp,
                                 block=xblock)

    offs = (0.0,) if euler else (0.0, -0.5, -1.0)
    for j in range(total, 0, -1):
        t0 = times[j]
        t1 = times[j - 1]
        y = eta[j]
        # advanced terms active iff the step interior lies at or below b_t - r
        active = (j + k_off <= total) if not r_zero else True
        # y-independent stage data: source gradient, matrices, advanced value
        pre = []
        for off in offs:
            tt = t0 + off * step if off else t0
            fidx = j + off
            xt = x_idx(fidx)
            src = np.atleast_1d(np.asarray(d2(tt, xt, x_idx(fidx - k_off)),
                                           dtype=float))
            if active:
                src = src + np.atleast_1d(np.asarray(
                    d3(tt + r, x_idx(fidx + k_off), xt), dtype=float))
                AD_adv = A_D(tt + r)
                adv = None if r_zero else eta_advanced(fidx + k_off, y, j - 1)
            else:
                AD_adv = adv = None
            pre.append((src, A(tt), AD_adv, adv))

        def rhs(c, yy):
            src_c, A_c, AD_c, adv_c = pre[c]
            val = src_c - yy @ A_c
            if AD_c is not None:
                val = val - (yy if adv_c is None else adv_c) @ AD_c
            return val

        if euler:
            ynew = y - step * rhs(0, y)
        else:
            k1 = rhs(0, y)
            k2 = rhs(1, y - 0.5 * step * k1)
            k3 = rhs(1, y - 0.5 * step * k2)
            k4 = rhs(2, y - step * k3)
            ynew = y - (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(ynew)):
            raise NonFinite(f"adjoint integration produced non-finite values at t={t1!r}")
        eta[j - 1] = ynew

    eta_traj = Trajectory(grid=times, values=eta, interp=interp, block=nsub)
    if not np.any(eta):
        warnings.warn(
            "adjoint solution is identically zero (cost gradients vanish); the "
            "transversality-anchored solution is trivial", RuntimeWarning,
            stacklevel=2)
    return eta_traj


def _composite_weights(nseg: int, rule: str, step: float) -> np.ndarray:
    """Quadrature weights for nseg uniform cells (nseg+1 nodes)."""
    w = np.zeros(nseg + 1)
    if rule == "riemann":
        w[:-1] = step
    elif rule == "trapezoid":
        w[:] = step
        w[0] = w[-1] = 0.5 * step
    elif rule == "simpson":
        if nseg < 2:
            return _composite_weights(nseg, "trapezoid", step)
        main = nseg if nseg % 2 == 0 else nseg - 3
        if main >= 2:
            w[0] += step / 3.0
            w[main] += step / 3.0
            w[1:main:2] += 4.0 * step / 3.0
            w[2:main:2] += 2.0 * step / 3.0
        if main < nseg:
            if nseg - main == 3:  # Simpson 3/8 tail
                w[main] += 3.0 * step / 8.0
                w[main + 1] += 9.0 * step / 8.0
                w[main + 2] += 9.0 * step / 8.0
                w[main + 3] += 3.0 * step / 8.0
            else:  # nseg odd and < 3: single trapezoid cells
                for i in range(main, nseg):
                    w[i] += 0.5 * step
                    w[i + 1] += 0.5 * step
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return w


def evaluate_cost(problem: DelayedProblem, x: Trajectory, u: Trajectory,
                  cfg: IntegratorConfig, t_hi: float | None = None) -> float:
    """Quadrature of f0(t, x, x_r) + g0(t, u, u_s) over [a, t_hi] (default b).

    The default upper limit is the problem's original endpoint even when the
    solve grid was extended to b_tilde; pass ``t_hi`` explicitly to integrate
    over another node-aligned window (the reduction equivalence tests use
    b_tilde).
    """
    a = problem.a
    b = problem.b if t_hi is None else t_hi
    if b <= a:
        raise ValueError("cost window is empty")
    step = cfg.step
    q = (b - a) / step
    nseg = int(np.floor(q + 1e-9))
    rem = (b - a) - nseg * step
    if rem <= 1e-9 * max(1.0, abs(b)):
        rem = 0.0
    if not x.covers(a - problem.r, b):
        raise CoverageError("state trajectory does not cover the cost window")
    if not u.covers(a, b):
        raise CoverageError("control trajectory does not cover the cost window")
    ts = a + step * np.arange(nseg + 1)
    vals = np.empty(nseg + 1)
    s = problem.s
    psi = problem.psi

    # bulk node tables when the trajectories sit on the quadrature layout
    X = _aligned_node_values(x, ts, nseg)
    qx = int(np.searchsorted(x.grid, ts[0])) if X is not None else -1
    k_idx = int(round(problem.r / step))
    l_idx = int(round(problem.s / step))
    Xr = (x.values[qx - k_idx:qx - k_idx + nseg + 1]
          if X is not None and qx >= k_idx
          and abs(k_idx * step - problem.r) <= 1e-9 * max(1.0, problem.r) else None)
    U = _aligned_node_values(u, ts, nseg)

    for i, t in enumerate(ts):
        xt = X[i] if X is not None else x.eval(t)
        xr = Xr[i] if Xr is not None else x.eval(t - problem.r)
        ut = U[i] if U is not None else u.eval(t)
        ts_del = t - s
        if ts_del < a:
            us = np.atleast_1d(np.asarray(psi(ts_del), dtype=float))
        elif U is not None and i >= l_idx \
                and abs(l_idx * step - s) <= 1e-9 * max(1.0, s):
            us = U[i - l_idx]
        else:
            us = u.eval(ts_del)
        vals[i] = float(problem.f0(t, xt, xr)) + float(problem.g0(t, ut, us))
        if not np.isfinite(vals[i]):
            raise NonFinite(f"cost integrand non-finite at t={t!r}")
    w = _composite_weights(nseg, cfg.quadrature, step)
    total = float(w @ vals)
    if rem > 0.0:
        # partial last cell: single trapezoid on [a + nseg*step, b]
        t_last = b
        xt = x.eval(t_last)
        xr = x.eval(t_last - problem.r)
        ut = u.eval(t_last)
        tsd = t_last - s
        us = (np.atleast_1d(np.asarray(psi(tsd), dtype=float)) if tsd < a
              else u.eval(tsd))
        f_last = float(problem.f0(t_last, xt, xr)) + float(problem.g0(t_last, ut, us))
        total += 0.5 * rem * (vals[-1] + f_last)
    return total
