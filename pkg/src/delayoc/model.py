"""Problem model: delayed state-linear optimal control data and solutions.

The continuous problem is

    minimize   integral over [a, b] of  f0(t, x(t), x(t-r)) + g0(t, u(t), u(t-s))
    subject to x'(t) = A(t) x(t) + A_D(t) x(t-r) + g(t, u(t)) + g_D(t, u(t-s))
               x = phi on [a-r, a],   u = psi on [a-s, a),   u(t) in the
               control region.

All problem data are callables; history functions stay callables (not
samples) so integrators can query them at arbitrary times exactly.  ``psi``
must also be evaluable at ``t = a`` where it means the left limit; stepping
code queries that point when a stage lands exactly on the history boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .trajectory import Trajectory

FD_REL_STEP = 1e-6


def fd_gradient(f: Callable, arg: int) -> Callable:
    """Central finite-difference gradient of scalar ``f`` in argument ``arg``.

    Step per component is ``1e-6 * (1 + |z_i|)``.  Used as the fallback when
    a problem does not supply an analytic gradient callable.
    """

    def grad(*args):
        args = list(args)
        z = np.atleast_1d(np.asarray(args[arg], dtype=float))
        out = np.empty_like(z)
        for i in range(len(z)):
            step = FD_REL_STEP * (1.0 + abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            args[arg] = zp
            fp = f(*args)
            args[arg] = zm
            fm = f(*args)
            out[i] = (fp - fm) / (2.0 * step)
        return out

    return grad


def fd_jacobian(f: Callable, arg: int) -> Callable:
    """Central finite-difference Jacobian of vector-valued ``f`` in ``arg``."""

    def jac(*args):
        args = list(args)
        z = np.atleast_1d(np.asarray(args[arg], dtype=float))
        cols = []
        for i in range(len(z)):
            step = FD_REL_STEP * (1.0 + abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            args[arg] = zp
            fp = np.atleast_1d(np.asarray(f(*args), dtype=float))
            args[arg] = zm
            fm = np.atleast_1d(np.asarray(f(*args), dtype=float))
            cols.append((fp - fm) / (2.0 * step))
        return np.stack(cols, axis=1)

    return jac


@dataclass(frozen=True)
class TimeHorizon:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("horizon endpoints must be finite")
        if not self.a < self.b:
            raise ValueError(f"horizon needs a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class DelayPair:
    r: float  # state delay
    s: float  # control delay

    def __post_init__(self):
        if self.r < 0 or self.s < 0:
            raise ValueError("delays must be nonnegative")
        if self.r == 0 and self.s == 0:
            raise ValueError("state and control delays cannot both be zero")


@dataclass(frozen=True)
class ControlRegion:
    """Admissible control set: the whole space or an axis-aligned box."""

    kind: str = "all"
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("all", "box"):
            raise ValueError("control region kind must be 'all' or 'box'")
        if self.kind == "box":
            lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
            hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("box bounds must have matching shapes")
            if not np.all(lo <= hi):
                raise ValueError("box bounds need lower <= upper componentwise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    @classmethod
    def whole_space(cls) -> "ControlRegion":
        return cls(kind="all")

    @classmethod
    def box(cls, lower, upper) -> "ControlRegion":
        return cls(kind="box", lower=lower, upper=upper)

    def project(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "all":
            return np.asarray(u, dtype=float)
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        if self.kind == "all":
            return True
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def sample(self, rng: np.random.Generator, m: int, scale: float = 1.0) -> np.ndarray:
        """Random admissible control, used by the certificate sampler."""
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper)
        return rng.normal(0.0, scale, size=m)


@dataclass(frozen=True)
class DelayedProblem:
    """Full description of a delayed state-linear optimal control problem.

    Matrix/vector conventions: states are (n,) arrays, controls (m,) arrays,
    ``A``/``A_D`` return (n, n) arrays, ``g``/``g_D`` return (n,) arrays.
    ``d2_f0``/``d3_f0`` are the gradients of ``f0`` in its second/third
    argument; when omitted a central finite-difference fallback is installed.
    The optional ``d2_g0``/``d3_g0``/``du_g``/``dv_gD`` derivatives serve the
    closed-form maximizer and the discrete adjoint; they too fall back to
    finite differences.
    """

    n: int
    m: int
    A: Callable
    A_D: Callable
    g: Callable
    g_D: Callable
    f0: Callable
    g0: Callable
    phi: Callable
    psi: Callable
    horizon: TimeHorizon
    delays: DelayPair
    region: ControlRegion = field(default_factory=ControlRegion.whole_space)
    d2_f0: Optional[Callable] = None
    d3_f0: Optional[Callable] = None
    d2_g0: Optional[Callable] = None
    d3_g0: Optional[Callable] = None
    du_g: Optional[Callable] = None
    dv_gD: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and control dimensions must be positive")
        fallbacks = {
            "d2_f0": fd_gradient(self.f0, 1),
            "d3_f0": fd_gradient(self.f0, 2),
            "d2_g0": fd_gradient(self.g0, 1),
            "d3_g0": fd_gradient(self.g0, 2),
            "du_g": fd_jacobian(self.g, 1),
            "dv_gD": fd_jacobian(self.g_D, 1),
        }
        for name, fb in fallbacks.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, fb)

    @property
    def a(self) -> float:
        return self.horizon.a

    @property
    def b(self) -> float:
        return self.horizon.b

    @property
    def r(self) -> float:
        return self.delays.r

    @property
    def s(self) -> float:
        return self.delays.s


@dataclass(frozen=True)
class Solution:
    """Solver output: trajectories plus cost and run diagnostics."""

    state: Trajectory
    control: Trajectory
    adjoint: Optional[Trajectory]
    cost: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.cost):
            raise ValueError("solution cost must be finite")


@dataclass(frozen=True)
class Violation:
    """One failed validity check, naming the offending field and point."""

    field: str
    point: Optional[float]
    message: str

    def __str__(self):
        loc = "" if self.point is None else f" at t={self.point:.6g}"
        return f"{self.field}{loc}: {self.message}"


# validate() settings: 101 samples per interval; discontinuities are probed a
# few ulps either side of each node, so smooth variation stays far below the
# jump threshold while genuine jumps exceed it.
_VALIDATE_SAMPLES = 101
_JUMP_THRESHOLD_FACTOR = 1e6 * np.finfo(float).eps


def _sample_times(lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, _VALIDATE_SAMPLES)


def _check_finite(out, field_name, t, violations, shape=None):
    arr = np.asarray(out, dtype=float)
    if shape is not None and arr.shape != shape:
        violations.append(Violation(field_name, t, f"expected shape {shape}, got {arr.shape}"))
        return False
    if not np.all(np.isfinite(arr)):
        violations.append(Violation(field_name, t, "returned non-finite value"))
        return False
    return True


def _check_jumps(fn, field_name, times, violations, threshold):
    """Flag jump discontinuities by two-sided probes a few ulps wide."""
    for t in times[1:-1]:
        eps = 8.0 * np.finfo(float).eps * max(1.0, abs(t))
        try:
            left = np.asarray(fn(t - eps), dtype=float)
            right = np.asarray(fn(t + eps), dtype=float)
        except Exception:
            continue  # non-finiteness is reported by the node sweep
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            continue
        scale = max(1.0, float(np.max(np.abs(left))), float(np.max(np.abs(right))))
        if np.max(np.abs(right - left)) > threshold * scale:
            violations.append(Violation(field_name, float(t),
                                        "jump discontinuity detected (heuristic probe)"))
            return  # one report per field is enough


def validate(problem: DelayedProblem, jump_threshold: float | None = None) -> list[Violation]:
    """Best-effort validity diagnostics; empty list means all checks passed.

    Finiteness and shape checks are exact; continuity is only probed
    heuristically (ulp-scale two-sided samples on a 101-point grid), since
    continuity of black-box callables is undecidable numerically.
    Deterministic: repeated calls return identical lists.
    """
    threshold = _JUMP_THRESHOLD_FACTOR if jump_threshold is None else jump_threshold
    v: list[Violation] = []
    a, b = problem.a, problem.b
    r, s = problem.r, problem.s
    n, m = problem.n, problem.m

    if r == 0 and s == 0:
        v.append(Violation("delays", None, "state and control delays simultaneously zero"))

    rng = np.random.default_rng(0)
    x_probe = None

    # history functions
    for t in _sample_times(a - r, a):
        if not _check_finite(problem.phi(t), "phi", float(t), v, shape=None):
            break
    try:
        x_probe = np.atleast_1d(np.asarray(problem.phi(a), dtype=float))
        if x_probe.shape != (n,):
            v.append(Violation("phi", a, f"expected shape ({n},), got {x_probe.shape}"))
            x_probe = np.zeros(n)
    except Exception as exc:  # pragma: no cover - defensive
        v.append(Violation("phi", a, f"raised {exc!r}"))
        x_probe = np.zeros(n)
    for t in _sample_times(a - s, a)[:-1]:
        if not _check_finite(problem.psi(t), "psi", float(t), v):
            break
    u_probe = problem.region.project(np.zeros(m))

    # time-dependent problem data on [a, b]
    times = _sample_times(a, b)
    checks = [
        ("A", lambda t: problem.A(t), (n, n)),
        ("A_D", lambda t: problem.A_D(t), (n, n)),
        ("g", lambda t: problem.g(t, u_probe), (n,)),
        ("g_D", lambda t: problem.g_D(t, u_probe), (n,)),
        ("f0", lambda t: problem.f0(t, x_probe, x_probe), ()),
        ("g0", lambda t: problem.g0(t, u_probe, u_probe), ()),
        ("d2_f0", lambda t: problem.d2_f0(t, x_probe, x_probe), (n,)),
        ("d3_f0", lambda t: problem.d3_f0(t, x_probe, x_probe), (n,)),
    ]
    for field_name, fn, shape in checks:
        ok = True
        for t in times:
            expect = shape if shape != () else None
            out = fn(float(t))
            arr = np.asarray(out, dtype=float)
            if shape == () and arr.shape not in ((), (1,)):
                v.append(Violation(field_name, float(t), f"expected scalar, got shape {arr.shape}"))
                ok = False
                break
            if not _check_finite(out, field_name, float(t), v, shape=expect):
                ok = False
                break
        if ok:
            _check_jumps(fn, field_name, times, v, threshold)

    _check_jumps(problem.phi, "phi", _sample_times(a - r, a), v, threshold)
    if s > 0:
        _check_jumps(problem.psi, "psi", _sample_times(a - s, a), v, threshold)

    # spot-check value dependence at a few random probe points
    for _ in range(3):
        t = float(rng.uniform(a, b))
        x1 = x_probe + rng.normal(0, 1 + float(np.max(np.abs(x_probe))), size=n)
        u1 = problem.region.project(rng.normal(0, 1.0, size=m))
        _check_finite(problem.f0(t, x1, x1), "f0", t, v)
        _check_finite(problem.g0(t, u1, u1), "g0", t, v)
        _check_finite(problem.g(t, u1), "g", t, v, shape=(n,))
        _check_finite(problem.g_D(t, u1), "g_D", t, v, shape=(n,))

    if problem.region.kind == "box" and not np.all(problem.region.lower <= problem.region.upper):
        v.append(Violation("region", None, "box bounds violate lower <= upper"))

    return v
