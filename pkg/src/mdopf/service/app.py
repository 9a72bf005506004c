"""FastAPI service wrapping the solver package.

Error mapping: malformed feeders, unit mix-ups and network invariant
violations return 400 (the CLI exits 3); solver failures such as
non-convergence or singular systems return 409 (the CLI exits 2).
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..ac_sweep import PhasorState, ZeroVoltagePhase
from ..experiments import (
    run_exponent_sweep,
    run_nominal_comparison,
    run_vref_sweep,
    run_vuf_sweep,
    solve_named_model,
)
from ..feeder import ParseError, UnitError, parse_feeder_dict, solution_table
from ..linear_model import (
    NonSquareSystem,
    NumericallySingular,
    StructurallySingular,
    check_operational_limits,
)
from ..network import Network, ValidationError, validate
from . import schemas

_INPUT_ERRORS = (ParseError, UnitError, ValidationError)
_SOLVER_ERRORS = (NumericallySingular, StructurallySingular, NonSquareSystem,
                  ZeroVoltagePhase)


def _network_or_400(doc: dict) -> Network:
    try:
        return parse_feeder_dict(doc)
    except _INPUT_ERRORS as exc:
        detail = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ValidationError):
            detail["violations"] = [
                {"element": v.element, "message": v.message}
                for v in exc.report.violations
            ]
        raise HTTPException(status_code=400, detail=detail) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="mdopf service", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate_feeder(req: schemas.FeederRequest):
        try:
            network = _network_or_400(req.feeder)
        except HTTPException as exc:
            detail = exc.detail
            if isinstance(detail, dict) and "violations" in detail:
                return {"valid": False, "violations": detail["violations"]}
            raise
        report = validate(network)
        return {
            "valid": report.ok,
            "violations": [{"element": v.element, "message": v.message}
                           for v in report.violations],
        }

    @app.post("/solve", response_model=schemas.SolveResponse)
    def solve_endpoint(req: schemas.SolveRequest):
        network = _network_or_400(req.feeder)
        try:
            sol = solve_named_model(network, req.model, tol=req.tol,
                                    max_iter=req.max_iter,
                                    linearization_point=req.linearization_point)
        except _SOLVER_ERRORS as exc:
            raise HTTPException(status_code=409, detail={
                "type": type(exc).__name__, "message": str(exc)}) from exc
        if isinstance(sol, PhasorState):
            if not sol.converged:
                raise HTTPException(status_code=409, detail={
                    "type": "NotConverged",
                    "message": f"sweep did not converge in {sol.iterations} "
                               f"iterations (mismatch {sol.max_mismatch:.3e})"})
            iterations, mismatch = sol.iterations, sol.max_mismatch
            violations = []
        else:
            iterations, mismatch = 0, None
            violations = [dataclasses.asdict(v) for v in
                          check_operational_limits(sol, network).violations]
        table = solution_table(sol)
        return {
            "model": req.model,
            "objective": sol.objective,
            "converged": True,
            "iterations": iterations,
            "max_mismatch": mismatch,
            "s_slack": [[z.real, z.imag] for z in sol.s_slack],
            "buses": table["buses"],
            "loads": table["loads"],
            "limit_violations": violations,
        }

    @app.post("/compare", response_model=schemas.CompareResponse)
    def compare_endpoint(req: schemas.CompareRequest):
        network = _network_or_400(req.feeder)
        records = run_nominal_comparison(network, req.models, feeder_name=req.name)
        return {"records": [dataclasses.asdict(r) for r in records]}

    @app.post("/sweep/exponent", response_model=schemas.ExponentSweepResponse)
    def exponent_endpoint(req: schemas.ExponentSweepRequest):
        network = _network_or_400(req.feeder)
        records = run_exponent_sweep(network, req.alphas)
        return {"records": [dataclasses.asdict(r) for r in records]}

    @app.post("/sweep/vuf", response_model=schemas.VufSweepResponse)
    def vuf_endpoint(req: schemas.VufSweepRequest):
        network = _network_or_400(req.feeder)
        rows, summaries = run_vuf_sweep(network, req.targets, req.samples, req.seed)
        return {
            "records": [dataclasses.asdict(r) for r in rows],
            "summaries": [dataclasses.asdict(r) for r in summaries],
        }

    @app.post("/sweep/vref", response_model=schemas.VrefSweepResponse)
    def vref_endpoint(req: schemas.VrefSweepRequest):
        network = _network_or_400(req.feeder)
        records = run_vref_sweep(network, req.factors)
        return {"records": [dataclasses.asdict(r) for r in records]}

    return app


app = create_app()
