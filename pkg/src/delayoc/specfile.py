r"""Declarative problem files: a flat, sectioned key-value text format.

The file format covers the expressible subset of the problem class: time
polynomials for the matrices, histories and linear cost coefficients,
constant quadratic forms for the cost, forcings affine in the control, and
whole-space or box control regions.  Example::

    [problem]
    name = example-P
    n = 1
    m = 1

    [horizon]
    a = 0
    b = 4

    [delays]
    r = 2
    s = 1

    [dynamics]
    A[0,0] = 1
    A_D[0,0] = 1
    g_D_lin[0,0] = -10

    [cost]
    fx[0] = 1
    R[0,0] = 100

    [history]
    phi[0] = 1
    psi[0] = 0

    [control]
    region = all

Grammar (entries omitted default to zero; '#' starts a comment)::

    file     := section*
    section  := '[' name ']' entry*
    entry    := key ('[' index (',' index)? ']')? '=' value
    value    := poly | number | word          (per key; see table below)
    poly     := term (('+' | '-') term)*
    term     := number | number '*'? 't' ('^' uint)? | 't' ('^' uint)?

Keys: [problem] name, n, m; [horizon] a, b; [delays] r, s;
[dynamics] A[i,j], A_D[i,j] (n x n polys), g_const[i], g_D_const[i]
(n polys), g_lin[i,j], g_D_lin[i,j] (n x m polys);
[cost] fx[i], fy[i] (n polys: linear state terms), Qf[i,j] (2n x 2n floats,
quadratic form over stacked (x, x_r)), R[i,j] (2m x 2m floats, quadratic
form over stacked (u, u_s)), pu[i], pv[i] (m polys), const (poly);
[history] phi[i], psi[i] (polys); [control] region = all | box,
lower[i], upper[i] (floats, box only).

Unknown sections or keys are rejected with a line/column diagnostic.
"""

from __future__ import annotations

import re
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .errors import SpecFormatError
from .model import (ControlRegion, DelayPair, DelayedProblem, TimeHorizon)

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM_RE = re.compile(
    rf"^\s*(?:(?P<coef>{_NUM})\s*\*?\s*)?(?P<t>t(?:\^(?P<pow>\d+))?)?\s*$")


def parse_poly(text: str, line: int | None = None, column: int | None = None) -> tuple:
    """Parse a polynomial in t into an ascending coefficient tuple."""
    s = text.strip()
    if not s:
        raise SpecFormatError("empty polynomial", line, column)
    # split into signed terms at top level
    terms = []
    buf = ""
    sign = 1.0
    i = 0
    first = True
    while i < len(s):
        ch = s[i]
        if ch in "+-" and buf.strip() and s[i - 1] not in "eE+-*^":
            terms.append((sign, buf))
            sign = -1.0 if ch == "-" else 1.0
            buf = ""
        elif ch in "+-" and not buf.strip() and first:
            sign = -1.0 if ch == "-" else 1.0
        else:
            buf += ch
        i += 1
        first = False
    terms.append((sign, buf))
    coeffs: dict[int, float] = {}
    for sgn, term in terms:
        mt = _TERM_RE.match(term)
        if not mt or (mt.group("coef") is None and mt.group("t") is None):
            raise SpecFormatError(f"cannot parse polynomial term {term.strip()!r}",
                                  line, column)
        coef = float(mt.group("coef")) if mt.group("coef") is not None else 1.0
        power = 0
        if mt.group("t") is not None:
            power = int(mt.group("pow")) if mt.group("pow") else 1
        coeffs[power] = coeffs.get(power, 0.0) + sgn * coef
    deg = max(coeffs)
    return tuple(coeffs.get(p, 0.0) for p in range(deg + 1))


def format_poly(coeffs) -> str:
    parts = []
    for p, c in enumerate(coeffs):
        if c == 0.0 and len(coeffs) > 1:
            continue
        if p == 0:
            parts.append(f"{c!r}")
        elif p == 1:
            parts.append(f"{c!r}*t")
        else:
            parts.append(f"{c!r}*t^{p}")
    if not parts:
        return "0.0"
    out = parts[0]
    for term in parts[1:]:
        out += " - " + term[1:] if term.startswith("-") else " + " + term
    return out


def _poly_eval(coeffs, t: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


class RegionModel(BaseModel):
    kind: Literal["all", "box"] = "all"
    lower: Optional[list[float]] = None
    upper: Optional[list[float]] = None


class ProblemSpecModel(BaseModel):
    """Declarative problem description, the wire/file schema of the service.

    Polynomial entries are strings in the grammar above; quadratic forms are
    plain float matrices over the stacked arguments.
    """

    name: str = ""
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    a: float
    b: float
    r: float = Field(ge=0.0)
    s: float = Field(ge=0.0)
    A: Optional[list[list[str]]] = None
    A_D: Optional[list[list[str]]] = None
    g_const: Optional[list[str]] = None
    g_lin: Optional[list[list[str]]] = None
    g_D_const: Optional[list[str]] = None
    g_D_lin: Optional[list[list[str]]] = None
    fx: Optional[list[str]] = None
    fy: Optional[list[str]] = None
    Qf: Optional[list[list[float]]] = None
    R: Optional[list[list[float]]] = None
    pu: Optional[list[str]] = None
    pv: Optional[list[str]] = None
    cost_const: str = "0"
    phi: Optional[list[str]] = None
    psi: Optional[list[str]] = None
    region: RegionModel = Field(default_factory=RegionModel)

    @model_validator(mode="after")
    def _fill_and_check(self):
        n, m = self.n, self.m

        def zeros(rows, cols=None):
            if cols is None:
                return ["0"] * rows
            return [["0"] * cols for _ in range(rows)]

        defaults = {
            "A": zeros(n, n), "A_D": zeros(n, n),
            "g_const": zeros(n), "g_lin": zeros(n, m),
            "g_D_const": zeros(n), "g_D_lin": zeros(n, m),
            "fx": zeros(n), "fy": zeros(n),
            "pu": zeros(m), "pv": zeros(m),
            "phi": zeros(n), "psi": zeros(m),
        }
        for key, default in defaults.items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, default)
        if self.Qf is None:
            object.__setattr__(self, "Qf", [[0.0] * (2 * n) for _ in range(2 * n)])
        if self.R is None:
            object.__setattr__(self, "R", [[0.0] * (2 * m) for _ in range(2 * m)])

        shapes = {
            "A": (n, n), "A_D": (n, n), "g_lin": (n, m), "g_D_lin": (n, m),
            "Qf": (2 * n, 2 * n), "R": (2 * m, 2 * m),
        }
        for key, (rows, cols) in shapes.items():
            val = getattr(self, key)
            if len(val) != rows or any(len(row) != cols for row in val):
                raise ValueError(f"{key} must be {rows}x{cols}")
        for key, length in (("g_const", n), ("g_D_const", n), ("fx", n), ("fy", n),
                            ("pu", m), ("pv", m), ("phi", n), ("psi", m)):
            if len(getattr(self, key)) != length:
                raise ValueError(f"{key} must have {length} entries")
        if not self.a < self.b:
            raise ValueError("horizon needs a < b")
        if self.r == 0.0 and self.s == 0.0:
            raise ValueError("delays cannot both be zero")
        if self.region.kind == "box":
            if self.region.lower is None or self.region.upper is None:
                raise ValueError("box region needs lower and upper bounds")
            if len(self.region.lower) != m or len(self.region.upper) != m:
                raise ValueError(f"box bounds must have {m} entries")
        # every polynomial must parse
        for key in ("A", "A_D", "g_lin", "g_D_lin"):
            for row in getattr(self, key):
                for entry in row:
                    parse_poly(entry)
        for key in ("g_const", "g_D_const", "fx", "fy", "pu", "pv", "phi", "psi"):
            for entry in getattr(self, key):
                parse_poly(entry)
        parse_poly(self.cost_const)
        return self


# sections -> allowed scalar keys / indexed keys
_SCALAR_KEYS = {
    "problem": {"name", "n", "m"},
    "horizon": {"a", "b"},
    "delays": {"r", "s"},
    "cost": {"const"},
    "control": {"region"},
}
_INDEXED_KEYS = {
    "dynamics": {"A": 2, "A_D": 2, "g_const": 1, "g_lin": 2,
                 "g_D_const": 1, "g_D_lin": 2},
    "cost": {"fx": 1, "fy": 1, "Qf": 2, "R": 2, "pu": 1, "pv": 1},
    "history": {"phi": 1, "psi": 1},
    "control": {"lower": 1, "upper": 1},
}
_KEY_RE = re.compile(r"^(?P<key>[A-Za-z_]+)(?:\[(?P<idx>[\d\s,]+)\])?$")


def parse_spec_text(text: str) -> ProblemSpecModel:
    """Parse the sectioned key-value format; errors carry line/column."""
    section = None
    scalars: dict[str, str] = {}
    indexed: dict[str, dict[tuple, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise SpecFormatError("unterminated section header", lineno, col)
            section = stripped[1:-1].strip().lower()
            if section not in set(_SCALAR_KEYS) | set(_INDEXED_KEYS):
                raise SpecFormatError(f"unknown section [{section}]", lineno, col)
            continue
        if section is None:
            raise SpecFormatError("entry before any section header", lineno, col)
        if "=" not in stripped:
            raise SpecFormatError("expected 'key = value'", lineno, col)
        key_part, value = (p.strip() for p in stripped.split("=", 1))
        mt = _KEY_RE.match(key_part)
        if not mt:
            raise SpecFormatError(f"malformed key {key_part!r}", lineno, col)
        key, idx = mt.group("key"), mt.group("idx")
        if idx is None:
            if key not in _SCALAR_KEYS.get(section, set()):
                raise SpecFormatError(
                    f"unknown key {key!r} in section [{section}]", lineno, col)
            scalars[f"{section}.{key}"] = value
        else:
            allowed = _INDEXED_KEYS.get(section, {})
            if key not in allowed:
                raise SpecFormatError(
                    f"unknown indexed key {key!r} in section [{section}]", lineno, col)
            parts = [p.strip() for p in idx.split(",")]
            if len(parts) != allowed[key]:
                raise SpecFormatError(
                    f"{key} takes {allowed[key]} index(es), got {len(parts)}",
                    lineno, col)
            try:
                index = tuple(int(p) for p in parts)
            except ValueError:
                raise SpecFormatError(f"non-integer index in {key_part!r}",
                                      lineno, col) from None
            indexed.setdefault(key, {})[index] = value
            indexed[key][index + ("__line__",)] = str(lineno)

    def need(name, conv=str):
        if name not in scalars:
            raise SpecFormatError(f"missing required entry {name.split('.', 1)[1]!r} "
                                  f"in section [{name.split('.', 1)[0]}]", None, None)
        try:
            return conv(scalars[name])
        except ValueError:
            raise SpecFormatError(f"invalid value for {name}", None, None) from None

    n = need("problem.n", int)
    m = need("problem.m", int)
    if n < 1 or m < 1:
        raise SpecFormatError("dimensions n and m must be positive", None, None)

    def fill(key, rows, cols=None, default="0", numeric=False):
        data = indexed.get(key, {})
        if cols is None:
            out = [default] * rows
        else:
            out = [[default] * cols for _ in range(rows)]
        for index, value in data.items():
            if index and index[-1] == "__line__":
                continue
            lineno = int(data.get(index + ("__line__",), "0")) or None
            if cols is None:
                (i,) = index
                if not 0 <= i < rows:
                    raise SpecFormatError(f"{key}[{i}] out of range (size {rows})",
                                          lineno, None)
                out[i] = value
            else:
                i, j = index
                if not (0 <= i < rows and 0 <= j < cols):
                    raise SpecFormatError(
                        f"{key}[{i},{j}] out of range (shape {rows}x{cols})",
                        lineno, None)
                out[i][j] = value
            if numeric:
                try:
                    float(value)
                except ValueError:
                    raise SpecFormatError(f"{key} entries must be numbers, got "
                                          f"{value!r}", lineno, None) from None
        if numeric:
            if cols is None:
                return [float(v) for v in out]
            return [[float(v) for v in row] for row in out]
        return out

    region_kind = scalars.get("control.region", "all").lower()
    if region_kind not in ("all", "box"):
        raise SpecFormatError(f"region must be 'all' or 'box', got {region_kind!r}",
                              None, None)
    region = RegionModel(
        kind=region_kind,
        lower=fill("lower", m, numeric=True, default="0") if region_kind == "box" else None,
        upper=fill("upper", m, numeric=True, default="0") if region_kind == "box" else None,
    )

    try:
        return ProblemSpecModel(
            name=scalars.get("problem.name", ""),
            n=n, m=m,
            a=need("horizon.a", float), b=need("horizon.b", float),
            r=need("delays.r", float), s=need("delays.s", float),
            A=fill("A", n, n), A_D=fill("A_D", n, n),
            g_const=fill("g_const", n), g_lin=fill("g_lin", n, m),
            g_D_const=fill("g_D_const", n), g_D_lin=fill("g_D_lin", n, m),
            fx=fill("fx", n), fy=fill("fy", n),
            Qf=fill("Qf", 2 * n, 2 * n, numeric=True),
            R=fill("R", 2 * m, 2 * m, numeric=True),
            pu=fill("pu", m), pv=fill("pv", m),
            cost_const=scalars.get("cost.const", "0"),
            phi=fill("phi", n), psi=fill("psi", m),
            region=region,
        )
    except ValueError as exc:
        raise SpecFormatError(str(exc), None, None) from None


def format_spec(model: ProblemSpecModel) -> str:
    """Canonical emission of a spec model; parses back to equal values."""
    out = []

    def canon(poly_str):
        return format_poly(parse_poly(poly_str))

    out.append("[problem]")
    if model.name:
        out.append(f"name = {model.name}")
    out.append(f"n = {model.n}")
    out.append(f"m = {model.m}")
    out.append("")
    out.append("[horizon]")
    out.append(f"a = {model.a!r}")
    out.append(f"b = {model.b!r}")
    out.append("")
    out.append("[delays]")
    out.append(f"r = {model.r!r}")
    out.append(f"s = {model.s!r}")
    out.append("")
    out.append("[dynamics]")
    for key in ("A", "A_D", "g_lin", "g_D_lin"):
        for i, row in enumerate(getattr(model, key)):
            for j, entry in enumerate(row):
                if parse_poly(entry) != (0.0,):
                    out.append(f"{key}[{i},{j}] = {canon(entry)}")
    for key in ("g_const", "g_D_const"):
        for i, entry in enumerate(getattr(model, key)):
            if parse_poly(entry) != (0.0,):
                out.append(f"{key}[{i}] = {canon(entry)}")
    out.append("")
    out.append("[cost]")
    for key in ("fx", "fy", "pu", "pv"):
        for i, entry in enumerate(getattr(model, key)):
            if parse_poly(entry) != (0.0,):
                out.append(f"{key}[{i}] = {canon(entry)}")
    for key in ("Qf", "R"):
        for i, row in enumerate(getattr(model, key)):
            for j, val in enumerate(row):
                if val != 0.0:
                    out.append(f"{key}[{i},{j}] = {val!r}")
    if parse_poly(model.cost_const) != (0.0,):
        out.append(f"const = {canon(model.cost_const)}")
    out.append("")
    out.append("[history]")
    for i, entry in enumerate(model.phi):
        out.append(f"phi[{i}] = {canon(entry)}")
    for i, entry in enumerate(model.psi):
        out.append(f"psi[{i}] = {canon(entry)}")
    out.append("")
    out.append("[control]")
    out.append(f"region = {model.region.kind}")
    if model.region.kind == "box":
        for i, v in enumerate(model.region.lower):
            out.append(f"lower[{i}] = {v!r}")
        for i, v in enumerate(model.region.upper):
            out.append(f"upper[{i}] = {v!r}")
    return "\n".join(out) + "\n"


def build_problem(model: ProblemSpecModel) -> DelayedProblem:
    """Materialize callables (with exact derivatives) from a spec model."""
    n, m = model.n, model.m

    def poly_vec(entries):
        polys = [parse_poly(e) for e in entries]
        return lambda t: np.array([_poly_eval(p, t) for p in polys])

    def poly_mat(entries):
        polys = [[parse_poly(e) for e in row] for row in entries]
        return lambda t: np.array([[_poly_eval(p, t) for p in row] for row in polys])

    A_fn = poly_mat(model.A)
    AD_fn = poly_mat(model.A_D)
    gc_fn = poly_vec(model.g_const)
    gl_fn = poly_mat(model.g_lin)
    gDc_fn = poly_vec(model.g_D_const)
    gDl_fn = poly_mat(model.g_D_lin)
    fx_fn = poly_vec(model.fx)
    fy_fn = poly_vec(model.fy)
    pu_fn = poly_vec(model.pu)
    pv_fn = poly_vec(model.pv)
    phi_fn = poly_vec(model.phi)
    psi_fn = poly_vec(model.psi)
    const_poly = parse_poly(model.cost_const)
    Qf = 0.5 * (np.asarray(model.Qf, dtype=float)
                + np.asarray(model.Qf, dtype=float).T)
    R = 0.5 * (np.asarray(model.R, dtype=float)
               + np.asarray(model.R, dtype=float).T)

    def f0(t, x, y):
        z = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
        return float(fx_fn(t) @ z[:n] + fy_fn(t) @ z[n:] + z @ Qf @ z)

    def d2_f0(t, x, y):
        z = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
        return fx_fn(t) + 2.0 * (Qf @ z)[:n]

    def d3_f0(t, x, y):
        z = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
        return fy_fn(t) + 2.0 * (Qf @ z)[n:]

    def g0(t, u, v):
        w = np.concatenate([np.atleast_1d(u), np.atleast_1d(v)])
        return float(pu_fn(t) @ w[:m] + pv_fn(t) @ w[m:] + w @ R @ w
                     + _poly_eval(const_poly, t))

    def d2_g0(t, u, v):
        w = np.concatenate([np.atleast_1d(u), np.atleast_1d(v)])
        return pu_fn(t) + 2.0 * (R @ w)[:m]

    def d3_g0(t, u, v):
        w = np.concatenate([np.atleast_1d(u), np.atleast_1d(v)])
        return pv_fn(t) + 2.0 * (R @ w)[m:]

    region = (ControlRegion.whole_space() if model.region.kind == "all"
              else ControlRegion.box(model.region.lower, model.region.upper))

    return DelayedProblem(
        n=n, m=m,
        A=A_fn, A_D=AD_fn,
        g=lambda t, u: gc_fn(t) + gl_fn(t) @ np.atleast_1d(u),
        g_D=lambda t, v: gDc_fn(t) + gDl_fn(t) @ np.atleast_1d(v),
        f0=f0, g0=g0,
        phi=phi_fn, psi=psi_fn,
        horizon=TimeHorizon(model.a, model.b),
        delays=DelayPair(model.r, model.s),
        region=region,
        d2_f0=d2_f0, d3_f0=d3_f0, d2_g0=d2_g0, d3_g0=d3_g0,
        du_g=lambda t, u: gl_fn(t),
        dv_gD=lambda t, v: gDl_fn(t),
        name=model.name,
    )


def parse_problem_file(path) -> tuple[ProblemSpecModel, DelayedProblem]:
    with open(path, "r") as fh:
        model = parse_spec_text(fh.read())
    return model, build_problem(model)


EXAMPLE_SPECS: dict[str, ProblemSpecModel] = {
    "P": ProblemSpecModel(
        name="example-P", n=1, m=1, a=0.0, b=4.0, r=2.0, s=1.0,
        A=[["1"]], A_D=[["1"]], g_D_lin=[["-10"]],
        fx=["1"], R=[[100.0, 0.0], [0.0, 0.0]],
        phi=["1"], psi=["0"],
    ),
}


def example_spec_text(name: str = "P") -> str:
    if name not in EXAMPLE_SPECS:
        raise KeyError(f"unknown example {name!r}; available: {sorted(EXAMPLE_SPECS)}")
    return format_spec(EXAMPLE_SPECS[name])
