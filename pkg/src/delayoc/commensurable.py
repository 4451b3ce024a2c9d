"""Common-step reduction of the two delays and the solve grid built on it.

The pipeline needs a step h with r = h*k and s = h*l for coprime integers
k, l, plus the number N of h-subintervals covering the horizon.  When the
horizon length is not a multiple of h the endpoint is extended to the next
multiple b_tilde; the solve then runs on [a, b_tilde] and results restrict
to [a, b].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NonCommensurable, StrictGridViolation
from .model import DelayPair, DelayedProblem, TimeHorizon

DEFAULT_RATIO_TOL = 1e-9
MAX_DENOMINATOR = 10**6
_RECONSTRUCT_TOL = 1e-12


@dataclass(frozen=True)
class CommensurableGrid:
    """Common step h, delay multiples k and l, and subdivision count N.

    ``strict_ok`` records whether N > 2k+1 holds; the reduction proof uses
    that bound for index bookkeeping but the numerical pipeline does not, so
    grids failing it are still returned (strict mode refuses them instead).
    """

    h: float
    k: int
    l: int
    N: int
    a: float
    b: float
    b_tilde: float
    strict_ok: bool

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid step h must be positive")
        if self.N < 1:
            raise ValueError("grid needs at least one subinterval")

    @property
    def extended(self) -> bool:
        return self.b_tilde > self.b


def _continued_fraction(ratio: float, tol: float, max_den: int) -> tuple[int, int]:
    """Best rational k/l ~ ratio by continued-fraction convergents.

    Returns the first convergent within ``tol`` whose numerator and
    denominator both stay within ``max_den``.
    """
    p_prev, q_prev = 1, 0
    p, q = int(math.floor(ratio)), 1
    x = ratio
    for _ in range(64):
        if abs(ratio - p / q) <= tol:
            return p, q
        frac = x - math.floor(x)
        if frac == 0:
            break
        x = 1.0 / frac
        a_i = math.floor(x)
        p, p_prev = a_i * p + p_prev, p
        q, q_prev = a_i * q + q_prev, q
        if p > max_den or q > max_den:
            break
    raise NonCommensurable(
        f"no rational approximation of delay ratio {ratio!r} with numerator and "
        f"denominator <= {max_den} within tolerance {tol:g}")


def reduce_delays(delays: DelayPair, tol: float = DEFAULT_RATIO_TOL,
                  max_den: int = MAX_DENOMINATOR) -> tuple[float, int, int]:
    """Return (h, k, l) with r = h*k and s = h*l, k and l coprime.

    A zero delay gets multiplier 0 and the nonzero delay defines h directly.
    Raises :class:`NonCommensurable` when the ratio admits no acceptable
    rational reduction, or when the recovered h fails to reconstruct the
    delays to grid precision (1e-12 relative).
    """
    r, s = delays.r, delays.s
    if r > 0 and s > 0:
        k, l = _continued_fraction(r / s, tol, max_den)
        if k == 0:
            raise NonCommensurable(f"delay ratio {r / s!r} reduced to zero numerator")
        d = math.gcd(k, l)
        k, l = k // d, l // d
        h = r / k
    elif r > 0:
        h, k, l = r, 1, 0
    else:
        h, k, l = s, 0, 1
    recon_tol = _RECONSTRUCT_TOL * max(r, s, 1.0)
    if abs(h * k - r) > recon_tol or abs(h * l - s) > recon_tol:
        raise NonCommensurable(
            f"delays ({r!r}, {s!r}) are not commensurable to grid precision: "
            f"h={h!r}, k={k}, l={l} reconstructs ({h * k!r}, {h * l!r})")
    return h, k, l


def build_grid(horizon: TimeHorizon, h: float, k: int, l: int) -> CommensurableGrid:
    """Smallest-N grid with a + h*N >= b; flags the N > 2k+1 condition."""
    if h <= 0:
        raise ValueError("step h must be positive")
    span = horizon.length
    q = span / h
    N = int(math.ceil(q - 1e-9 * max(1.0, q)))
    N = max(N, 1)
    b_tilde = horizon.a + h * N
    # guard against float drift in the ceiling above
    if b_tilde < horizon.b - 1e-9 * max(1.0, abs(horizon.b)):
        N += 1
        b_tilde = horizon.a + h * N
    return CommensurableGrid(h=h, k=k, l=l, N=N, a=horizon.a, b=horizon.b,
                             b_tilde=b_tilde, strict_ok=(N > 2 * k + 1))


def grid_for(problem: DelayedProblem, tol: float = DEFAULT_RATIO_TOL,
             strict: bool = False) -> CommensurableGrid:
    """Reduce the problem's delays and build its solve grid in one step."""
    h, k, l = reduce_delays(problem.delays, tol=tol)
    grid = build_grid(problem.horizon, h, k, l)
    if strict and not grid.strict_ok:
        raise StrictGridViolation(
            f"grid has N={grid.N} <= 2k+1={2 * grid.k + 1}; refusing in strict mode")
    return grid
