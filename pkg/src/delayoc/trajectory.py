"""Sampled time trajectories with exact node values and local interpolation.

A :class:`Trajectory` is the numerical stand-in for the continuous functions
the solver manipulates (state, control, adjoint).  Values are stored at a
strictly increasing time grid; evaluation between nodes uses either
piecewise-linear or piecewise-cubic (4-point Lagrange) interpolation.
Evaluation at a grid node returns the stored sample bitwise, which several
consistency tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError

INTERP_KINDS = ("linear", "cubic")

# Slack for queries that drift past the last node by float round-off when
# callers rebuild times as a + j*step.
_EDGE_SLACK = 1e-9


def interp_arrays(grid: np.ndarray, values: np.ndarray, t: float,
                  kind: str = "linear", hi: int | None = None,
                  lo: int = 0, block: int | None = None) -> np.ndarray:
    """Interpolate ``values`` (shape (K, d)) sampled at ``grid`` at time ``t``.

    ``lo``/``hi`` bound the usable index range [lo, hi); integrators use them
    to restrict lookups to the causally available part of a growing buffer
    without copying it.

    ``block`` declares the sampled function piecewise-smooth on windows of
    that many cells (boundaries at indices that are multiples of ``block``).
    Cubic stencils are then clamped inside the active window, so kinks at
    window seams (the method-of-steps breakpoints) cannot degrade the
    interpolation order.
    """
    n = len(grid) if hi is None else hi
    if n - lo < 1:
        raise CoverageError("empty trajectory buffer")
    lo_t, hi_t = grid[lo], grid[n - 1]
    if t < lo_t or t > hi_t:
        slack = _EDGE_SLACK * max(1.0, abs(hi_t), abs(lo_t))
        if t > hi_t and t - hi_t <= slack:
            return values[n - 1]
        if t < lo_t and lo_t - t <= slack:
            return values[lo]
        raise CoverageError(f"time {t!r} outside sampled window [{lo_t!r}, {hi_t!r}]")
    # uniform-spacing fast path for exact node hits (the common case inside
    # the integrators, whose grids are a + j*step)
    if n - lo > 1:
        dt0 = grid[lo + 1] - grid[lo]
        j = int(round((t - lo_t) / dt0)) + lo
        if lo <= j < n and grid[j] == t:
            return values[j]
    i = int(np.searchsorted(grid[lo:n], t)) + lo
    if i < n and grid[i] == t:
        return values[i]
    # cell index such that grid[i] < t < grid[i+1]
    i -= 1
    if block:
        win_lo = max((i // block) * block, lo)
        win_hi = min(win_lo + block, n - 1)
    else:
        win_lo, win_hi = lo, n - 1
    avail = win_hi - win_lo + 1
    if avail <= 1:
        return values[win_lo]
    if kind == "linear" or avail < 3:
        t0, t1 = grid[i], grid[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * values[i] + w * values[i + 1]
    if kind != "cubic":
        raise ValueError(f"unknown interpolation kind {kind!r}")
    # 4-point Lagrange stencil clamped into the active window
    width = min(4, avail)
    start = min(max(i - 1, win_lo), win_hi - width + 1)
    ts = grid[start:start + width]
    out = np.zeros_like(values[0], dtype=float)
    for j in range(width):
        w = 1.0
        for q in range(width):
            if q != j:
                w *= (t - ts[q]) / (ts[j] - ts[q])
        out = out + w * values[start + j]
    return out


# cubic Lagrange weights at cell midpoints for a uniform 4-point stencil,
# keyed by the midpoint's offset tau from the stencil start
_MID_W = {
    0.5: np.array([0.3125, 0.9375, -0.3125, 0.0625]),
    1.5: np.array([-0.0625, 0.5625, 0.5625, -0.0625]),
    2.5: np.array([0.0625, -0.3125, 0.9375, 0.3125]),
}


def uniform_midpoints(values: np.ndarray, interp: str,
                      block: int | None = None) -> np.ndarray:
    """Cell-midpoint values of uniformly sampled data, window-clamped.

    Equivalent to calling :func:`interp_arrays` at every cell midpoint of a
    uniform grid, but vectorized.  ``block`` is the smooth-window size in
    cells, as in :func:`interp_arrays`.
    """
    V = np.asarray(values, dtype=float)
    K = len(V) - 1  # cells
    if K < 1:
        raise CoverageError("need at least one cell for midpoints")
    if interp == "linear" or K == 1:
        return 0.5 * (V[:-1] + V[1:])
    if (block or K) < 3 or (block and K % block and K % block < 3):
        # tiny or partial windows: defer to the scalar path cell by cell
        grid = np.arange(K + 1, dtype=float)
        return np.stack([
            interp_arrays(grid, V, q + 0.5, "cubic", block=block)
            for q in range(K)])
    blk = block or K
    q = np.arange(K)
    w_lo = (q // blk) * blk
    w_hi = np.minimum(w_lo + blk, K)
    sbase = np.minimum(np.maximum(q - 1, w_lo), w_hi - 3)
    tau = q + 0.5 - sbase
    out = np.zeros((K, V.shape[1]))
    for tau_val, w in _MID_W.items():
        sel = tau == tau_val
        if np.any(sel):
            b = sbase[sel]
            out[sel] = (w[0] * V[b] + w[1] * V[b + 1]
                        + w[2] * V[b + 2] + w[3] * V[b + 3])
    return out


@dataclass(frozen=True)
class Trajectory:
    """Vector-valued function of time sampled on a strictly increasing grid.

    ``block`` optionally marks the sampled function as piecewise smooth on
    windows of that many cells (counted from the first node); integrator
    output carries the method-of-steps window so later interpolation stays
    one-sided at breakpoints.
    """

    grid: np.ndarray
    values: np.ndarray
    interp: str = "linear"
    block: int | None = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or values.ndim != 2 or len(grid) != len(values):
            raise ValueError("grid must be 1-d and values (len(grid), dim)")
        if len(grid) < 1:
            raise ValueError("trajectory needs at least one sample")
        if len(grid) > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(values)):
            raise ValueError("trajectory samples must be finite")
        if self.interp not in INTERP_KINDS:
            raise ValueError(f"interp must be one of {INTERP_KINDS}")
        if self.block is not None and self.block < 1:
            raise ValueError("block must be a positive cell count")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def t_lo(self) -> float:
        return float(self.grid[0])

    @property
    def t_hi(self) -> float:
        return float(self.grid[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def eval(self, t: float) -> np.ndarray:
        """Value at time ``t``; exact (bitwise) at grid nodes."""
        return np.array(interp_arrays(self.grid, self.values, float(t),
                                      self.interp, block=self.block))

    def eval_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty((len(ts), self.dim))
        for i, t in enumerate(ts):
            out[i] = interp_arrays(self.grid, self.values, float(t),
                                   self.interp, block=self.block)
        return out

    def covers(self, t_lo: float, t_hi: float, slack: float = 1e-9) -> bool:
        return self.grid[0] <= t_lo + slack and self.grid[-1] >= t_hi - slack


def write_csv(traj: Trajectory, path) -> None:
    """Write rows ``t,v1,...,vd`` with 17 significant digits, LF endings."""
    with open(path, "w", newline="\n") as fh:
        fh.write(format_csv(traj))


def format_csv(traj: Trajectory) -> str:
    lines = []
    for t, row in zip(traj.grid, traj.values):
        lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
    return "\n".join(lines) + "\n"


def read_csv(path, interp: str = "linear") -> Trajectory:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return Trajectory(grid=data[:, 0], values=data[:, 1:], interp=interp)
