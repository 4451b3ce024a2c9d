"""Solve service: FastAPI endpoints over the core library.

The handler functions hold all the behavior and are plain callables, so the
CLI can dispatch to them in-process without a running server; the FastAPI
routes are thin wrappers that translate library errors into HTTP 400s.
"""

from __future__ import annotations

import warnings

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..commensurable import grid_for
from ..errors import DelayOCError, NoConvergence
from ..integrate import IntegratorConfig
from ..library import EXAMPLE_P_COST
from ..model import Solution, validate
from ..reduction import augment, evaluate_block_A, format_block_A, solve_augmented
from ..specfile import EXAMPLE_SPECS, build_problem, example_spec_text
from ..synthesis import SweepConfig, certificate_report, certify, sweep
from ..transcription import (compare, discretize, solution_from_samples,
                             solve_to_solution)
from .schemas import (CompareRequest, CompareResponse, ExampleResponse,
                      GridModel, ReduceRequest, ReduceResponse, SolveRequest,
                      SolveResponse, TrajectoryModel, VerifyRequest,
                      VerifyResponse)


def _grid_model(grid) -> GridModel:
    return GridModel(h=grid.h, k=grid.k, l=grid.l, N=grid.N,
                     b_tilde=grid.b_tilde, strict_ok=grid.strict_ok)


def _clean_diagnostics(diag: dict) -> dict:
    out = {}
    for key, val in diag.items():
        if isinstance(val, (list, tuple)):
            out[key] = [float(v) for v in val]
        elif isinstance(val, (np.floating, np.integer)):
            out[key] = float(val)
        else:
            out[key] = val
    return out


def _solution_response(sol: Solution, grid, converged: bool) -> SolveResponse:
    return SolveResponse(
        cost=sol.cost,
        method=sol.method,
        converged=converged,
        grid=_grid_model(grid),
        state=TrajectoryModel.from_trajectory(sol.state),
        control=TrajectoryModel.from_trajectory(sol.control),
        adjoint=(TrajectoryModel.from_trajectory(sol.adjoint)
                 if sol.adjoint is not None else None),
        diagnostics=_clean_diagnostics(sol.diagnostics),
    )


def solve_handler(req: SolveRequest) -> SolveResponse:
    problem = build_problem(req.problem)
    violations = validate(problem)
    if violations:
        raise DelayOCError("problem failed validation: "
                           + "; ".join(str(v) for v in violations))
    grid = grid_for(problem, strict=req.strict)
    if req.method == "transcription":
        try:
            sol = solve_to_solution(problem, req.subintervals,
                                    tol=req.tol, max_iters=req.max_iters)
            return _solution_response(sol, grid, converged=True)
        except NoConvergence as exc:
            u, cost = exc.last
            sol = solution_from_samples(discretize(problem, req.subintervals), u, cost,
                                        diagnostics={"residual_history": exc.history})
            return _solution_response(sol, grid, converged=False)
    icfg = IntegratorConfig(scheme=req.scheme, step=req.step,
                            quadrature=req.quadrature)
    scfg = SweepConfig(max_iters=req.max_iters, control_tol=req.tol)
    solver = sweep if req.method == "sweep" else solve_augmented
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = solver(problem, scfg, icfg, grid=grid)
        return _solution_response(sol, grid, converged=True)
    except NoConvergence as exc:
        return _solution_response(exc.last, grid, converged=False)


def verify_handler(req: VerifyRequest) -> VerifyResponse:
    problem = build_problem(req.problem)
    grid = grid_for(problem)
    step = None
    if len(req.state.t) > 1:
        step = float(np.median(np.diff(np.asarray(req.state.t))))
    nsub = int(round(grid.h / step)) if step else None
    sol = Solution(
        state=req.state.to_trajectory(interp="cubic", block=nsub),
        control=req.control.to_trajectory(interp="cubic", block=nsub),
        adjoint=(req.adjoint.to_trajectory(interp="cubic", block=nsub)
                 if req.adjoint is not None else None),
        cost=0.0, method="external", diagnostics={},
    )
    cert = certify(problem, sol, samples=req.samples, seed=req.seed, grid=grid)
    return VerifyResponse(
        convexity_pass=cert.convexity_pass,
        convexity_worst_eig=cert.convexity_worst_eig,
        maximality_pass=cert.maximality_pass,
        maximality_worst_residual=cert.maximality_worst_residual,
        adjoint_pass=cert.adjoint_pass,
        adjoint_worst_residual=cert.adjoint_worst_residual,
        transversality_pass=cert.transversality_pass,
        transversality_abs=cert.transversality_abs,
        samples=cert.samples,
        overall=cert.overall,
        report=certificate_report(cert),
    )


def reduce_handler(req: ReduceRequest) -> ReduceResponse:
    problem = build_problem(req.problem)
    grid = grid_for(problem, tol=req.ratio_tol, strict=req.strict)
    response = ReduceResponse(grid=_grid_model(grid), t_query=req.t_query)
    if req.t_query is not None:
        aug = augment(problem, grid)
        mat = evaluate_block_A(aug, req.t_query)
        response = ReduceResponse(
            grid=_grid_model(grid), t_query=req.t_query,
            A_tilde=[[float(v) for v in row] for row in mat],
            A_tilde_text=format_block_A(aug, req.t_query),
        )
    return response


def compare_handler(req: CompareRequest) -> CompareResponse:
    problem = build_problem(req.problem)
    grid = grid_for(problem)
    icfg = IntegratorConfig(scheme=req.scheme, step=req.step,
                            quadrature=req.quadrature)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol_sweep = sweep(problem, SweepConfig(max_iters=req.max_iters), icfg,
                          grid=grid)
    sol_disc = solve_to_solution(problem, req.subintervals, tol=req.tol,
                                 max_iters=req.max_iters)
    rep = compare(sol_sweep, sol_disc)
    # same coarser-grid rule as the report, so points == table rows
    base = (sol_sweep.state.grid
            if len(sol_sweep.state.grid) <= len(sol_disc.state.grid)
            else sol_disc.state.grid)
    ts = base[(base >= rep.t_lo) & (base <= rep.t_hi)]
    lines = []
    for t in ts:
        row = (float(t), *sol_sweep.control.eval(float(t)),
               *sol_sweep.state.eval(float(t)),
               *sol_disc.control.eval(float(t)), *sol_disc.state.eval(float(t)))
        lines.append(",".join(f"{v:.17g}" for v in row))
    return CompareResponse(
        cost_sweep=sol_sweep.cost,
        cost_transcription=sol_disc.cost,
        cost_gap=rep.cost_gap,
        control_sup_gap=rep.control_gap,
        state_sup_gap=rep.state_gap,
        points=rep.points,
        table="\n".join(lines) + "\n",
    )


def example_handler(name: str) -> ExampleResponse:
    if name not in EXAMPLE_SPECS:
        raise KeyError(name)
    return ExampleResponse(
        name=name,
        spec_text=example_spec_text(name),
        reference_cost=EXAMPLE_P_COST if name == "P" else None,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="delayoc", version=__version__,
                  description="Delayed state-linear optimal control solver")

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest):
        try:
            return solve_handler(req)
        except (DelayOCError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest):
        try:
            return verify_handler(req)
        except (DelayOCError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/reduce", response_model=ReduceResponse)
    def reduce(req: ReduceRequest):
        try:
            return reduce_handler(req)
        except (DelayOCError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/compare", response_model=CompareResponse)
    def compare_methods(req: CompareRequest):
        try:
            return compare_handler(req)
        except (DelayOCError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/examples")
    def examples():
        return {"names": sorted(EXAMPLE_SPECS)}

    @app.get("/examples/{name}", response_model=ExampleResponse)
    def example(name: str):
        try:
            return example_handler(name)
        except KeyError as exc:
            raise HTTPException(status_code=404,
                                detail=f"unknown example {name!r}") from exc

    return app


app = create_app()
