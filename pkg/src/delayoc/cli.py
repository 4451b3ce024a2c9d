"""Command-line front end, a thin client of the solve service.

Subcommands: solve | verify | reduce | compare | example.  By default the
CLI dispatches to the service handlers in-process; with ``--server URL`` the
same requests go over HTTP to a running instance (`uvicorn
delayoc.service.app:app`).  All file outputs are written locally either way.

Exit codes: 0 success; 2 parse/argument/commensurability error; 3 solver
did not converge (report still written); 4 certificate failed (report still
written).
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import DelayOCError, SpecFormatError
from .service import schemas
from .service.app import (compare_handler, example_handler, reduce_handler,
                          solve_handler, verify_handler)
from .specfile import parse_spec_text
from .trajectory import format_csv, read_csv

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOCONV = 3
EXIT_CERT = 4


class _HttpClient:
    """Minimal JSON-over-HTTP dispatcher mirroring the in-process handlers."""

    def __init__(self, base_url: str):
        import httpx

        self._client = httpx.Client(base_url=base_url.rstrip("/"), timeout=600.0)

    def _post(self, path, request, response_model):
        resp = self._client.post(path, json=request.model_dump(mode="json"))
        if resp.status_code != 200:
            detail = resp.json().get("detail", resp.text) if resp.content else resp.text
            raise DelayOCError(f"server returned {resp.status_code}: {detail}")
        return response_model.model_validate(resp.json())

    def solve(self, req):
        return self._post("/solve", req, schemas.SolveResponse)

    def verify(self, req):
        return self._post("/verify", req, schemas.VerifyResponse)

    def reduce(self, req):
        return self._post("/reduce", req, schemas.ReduceResponse)

    def compare(self, req):
        return self._post("/compare", req, schemas.CompareResponse)

    def example(self, name):
        resp = self._client.get(f"/examples/{name}")
        if resp.status_code != 200:
            raise DelayOCError(f"server returned {resp.status_code}")
        return schemas.ExampleResponse.model_validate(resp.json())


class _LocalClient:
    def solve(self, req):
        return solve_handler(req)

    def verify(self, req):
        return verify_handler(req)

    def reduce(self, req):
        return reduce_handler(req)

    def compare(self, req):
        return compare_handler(req)

    def example(self, name):
        return example_handler(name)


def _client(args):
    return _HttpClient(args.server) if getattr(args, "server", None) else _LocalClient()


def _load_spec(path: str):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecFormatError(f"cannot read spec file {path!r}: {exc}")
    return parse_spec_text(text)


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_solution_files(out_dir, response: schemas.SolveResponse):
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "control.csv"),
           format_csv(response.control.to_trajectory()))
    _write(os.path.join(out_dir, "state.csv"),
           format_csv(response.state.to_trajectory()))
    if response.adjoint is not None:
        _write(os.path.join(out_dir, "adjoint.csv"),
               format_csv(response.adjoint.to_trajectory()))
    lines = [
        f"cost = {response.cost:.12g}",
        f"method = {response.method}",
        f"converged = {str(response.converged).lower()}",
    ]
    for key in ("scheme", "step", "iterations", "M", "dt", "tol", "single_pass",
                "relaxation"):
        if key in response.diagnostics:
            lines.append(f"{key} = {response.diagnostics[key]}")
    grid = response.grid
    lines += [
        f"grid_h = {grid.h:.12g}",
        f"grid_k = {grid.k}",
        f"grid_l = {grid.l}",
        f"grid_N = {grid.N}",
        f"grid_b_tilde = {grid.b_tilde:.12g}",
        f"grid_strict_ok = {str(grid.strict_ok).lower()}",
    ]
    _write(os.path.join(out_dir, "report.txt"), "\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    spec = _load_spec(args.spec)
    req = schemas.SolveRequest(
        problem=spec, method=args.method, scheme=args.scheme,
        quadrature=args.quadrature, step=args.step,
        subintervals=args.subintervals, tol=args.tol,
        max_iters=args.max_iters, strict=args.strict)
    response = _client(args).solve(req)
    _write_solution_files(args.out, response)
    print(f"cost = {response.cost:.12g} ({response.method}, "
          f"converged={str(response.converged).lower()})")
    print(f"wrote control.csv, state.csv"
          + (", adjoint.csv" if response.adjoint is not None else "")
          + f", report.txt to {args.out}")
    return EXIT_OK if response.converged else EXIT_NOCONV


def cmd_verify(args) -> int:
    if args.samples < 1:
        print("error: --samples must be positive", file=sys.stderr)
        return EXIT_PARSE
    spec = _load_spec(args.spec)
    sol_dir = args.solution
    paths = {name: os.path.join(sol_dir, f"{name}.csv")
             for name in ("control", "state", "adjoint")}
    for name in ("control", "state"):
        if not os.path.exists(paths[name]):
            print(f"error: missing {paths[name]}", file=sys.stderr)
            return EXIT_PARSE
    def load(name):
        traj = read_csv(paths[name])
        return schemas.TrajectoryModel.from_trajectory(traj)
    req = schemas.VerifyRequest(
        problem=spec,
        state=load("state"),
        control=load("control"),
        adjoint=load("adjoint") if os.path.exists(paths["adjoint"]) else None,
        samples=args.samples, seed=args.seed)
    response = _client(args).verify(req)
    out_dir = args.out or sol_dir
    _write(os.path.join(out_dir, "certificate.txt"), response.report)
    print(response.report, end="")
    return EXIT_OK if response.overall else EXIT_CERT


def cmd_reduce(args) -> int:
    spec = _load_spec(args.spec)
    req = schemas.ReduceRequest(problem=spec, t_query=args.t_query,
                                ratio_tol=args.tol, strict=args.strict)
    response = _client(args).reduce(req)
    grid = response.grid
    print(f"h = {grid.h:.12g}")
    print(f"k = {grid.k}")
    print(f"l = {grid.l}")
    print(f"N = {grid.N}")
    print(f"b_tilde = {grid.b_tilde:.12g}")
    print(f"strict_ok = {str(grid.strict_ok).lower()}")
    if response.A_tilde_text is not None:
        print(f"A_tilde({args.t_query:g}):")
        print(response.A_tilde_text, end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = _load_spec(args.spec)
    req = schemas.CompareRequest(
        problem=spec, scheme=args.scheme, quadrature=args.quadrature,
        step=args.step, subintervals=args.subintervals, tol=args.tol,
        max_iters=args.max_iters)
    response = _client(args).compare(req)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "comparison.csv"), response.table)
    summary = (f"cost_sweep = {response.cost_sweep:.12g}\n"
               f"cost_transcription = {response.cost_transcription:.12g}\n"
               f"cost_gap = {response.cost_gap:.12g}\n"
               f"control_sup_gap = {response.control_sup_gap:.12g}\n"
               f"state_sup_gap = {response.state_sup_gap:.12g}\n"
               f"points = {response.points}\n")
    _write(os.path.join(args.out, "summary.txt"), summary)
    print(summary, end="")
    return EXIT_OK


def cmd_example(args) -> int:
    response = _client(args).example(args.name)
    if args.out:
        _write(args.out, response.spec_text)
        print(f"wrote example {response.name!r} to {args.out}")
    else:
        print(response.spec_text, end="")
    if response.reference_cost is not None:
        print(f"# reference minimal cost: {response.reference_cost:.12g}",
              file=sys.stderr)
    return EXIT_OK


def _add_common(p):
    p.add_argument("--server", default=None,
                   help="base URL of a running service (default: in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delayoc",
        description="Delayed state-linear optimal control: solve, verify, reduce")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem spec and write trajectories")
    p.add_argument("spec")
    p.add_argument("--method", choices=("sweep", "augmented", "transcription"),
                   default="sweep")
    p.add_argument("--scheme", choices=("euler", "rk4"), default="rk4")
    p.add_argument("--quadrature", choices=("riemann", "trapezoid", "simpson"),
                   default="simpson")
    p.add_argument("--step", type=float, default=1e-3,
                   help="integration step (sweep/augmented)")
    p.add_argument("--subintervals", type=int, default=2000,
                   help="Euler subintervals (transcription)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--strict", action="store_true",
                   help="refuse grids whose subdivision fails N > 2k+1")
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="certify a solution directory")
    p.add_argument("spec")
    p.add_argument("--solution", required=True,
                   help="directory holding control.csv/state.csv[/adjoint.csv]")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None,
                   help="where to write certificate.txt (default: solution dir)")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reduce", help="print the commensurable grid and A_tilde")
    p.add_argument("spec")
    p.add_argument("--t-query", type=float, default=None,
                   help="dump A_tilde at this window time")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="delay-ratio rational recovery tolerance")
    p.add_argument("--strict", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("compare", help="run sweep and transcription, report gaps")
    p.add_argument("spec")
    p.add_argument("--scheme", choices=("euler", "rk4"), default="rk4")
    p.add_argument("--quadrature", choices=("riemann", "trapezoid", "simpson"),
                   default="simpson")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--subintervals", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, default=3000)
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("example", help="emit a built-in example problem spec")
    p.add_argument("name", nargs="?", default="P")
    p.add_argument("--out", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_example)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except KeyError as exc:
        print(f"error: unknown example {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DelayOCError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
