"""HTTP service exposing the audit procedures.

Run with ``uvicorn fnmr_audit.service:app``. The handler functions are plain
callables as well; the CLI invokes them in-process unless pointed at a
running server.
"""

from __future__ import annotations

import csv
import io

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__
from .data import DataError, DecisionRecord, StudyDataset, from_records
from .estimators import EstimationError
from .ftest import BootstrapConfig, UndefinedStatisticError, bootstrap_f_test
from .moe import margin_of_error
from .schemas import (
    AnalyzeRequest,
    ErrorResponse,
    FTestResponse,
    MoeRequest,
    MoeResponse,
    SimCellRequest,
    SimCellResponse,
    StudyInput,
)
from .simulation import SimConfig, run_cell


def study_from_input(req: StudyInput) -> StudyDataset:
    if req.records is not None:
        records = [DecisionRecord(**r.model_dump()) for r in req.records]
        if not records:
            raise DataError("no decision records")
        return from_records(records, provenance="request:records")
    reader = csv.DictReader(io.StringIO(req.csv_text))
    rows = []
    for line, row in enumerate(reader, start=2):
        try:
            rows.append(DecisionRecord(
                row["subject_id"].strip(), row["group_id"].strip(),
                int(row["attempt_index"]), int(row["decision"]),
            ))
        except (KeyError, AttributeError, TypeError, ValueError) as exc:
            raise DataError(f"row {line}: {exc}") from None
    if not rows:
        raise DataError("no data rows")
    return from_records(rows, provenance="request:csv")


def analyze(req: AnalyzeRequest) -> FTestResponse:
    study = study_from_input(req)
    res = bootstrap_f_test(study, BootstrapConfig(req.replicates, req.alpha, req.seed), req.threads)
    payload = res.to_dict(include_reference=req.include_reference)
    payload["groups"] = [g.to_dict() for g in res.groups]
    return FTestResponse(**payload)


def moe(req: MoeRequest) -> MoeResponse:
    study = study_from_input(req)
    res = margin_of_error(study, BootstrapConfig(req.replicates, req.alpha, req.seed), req.threads)
    return MoeResponse(**res.to_dict(include_phi=req.include_phi))


def simulate_cell(req: SimCellRequest) -> SimCellResponse:
    cfg = SimConfig(**req.model_dump(exclude={"threads"}))
    return SimCellResponse(**run_cell(cfg, req.threads).row())


app = FastAPI(title="fnmr-audit", version=__version__)


@app.exception_handler(UndefinedStatisticError)
async def _undefined(request, exc: UndefinedStatisticError):
    return JSONResponse(status_code=422, content=ErrorResponse(detail=str(exc), terms=exc.terms).model_dump())


@app.exception_handler(DataError)
@app.exception_handler(EstimationError)
async def _bad_data(request, exc):
    return JSONResponse(status_code=422, content=ErrorResponse(detail=str(exc)).model_dump())


@app.exception_handler(ValueError)
async def _bad_value(request, exc):
    return JSONResponse(status_code=422, content=ErrorResponse(detail=str(exc)).model_dump())


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/analyze", response_model=FTestResponse, responses={422: {"model": ErrorResponse}})
def analyze_endpoint(req: AnalyzeRequest):
    return analyze(req)


@app.post("/moe", response_model=MoeResponse, responses={422: {"model": ErrorResponse}})
def moe_endpoint(req: MoeRequest):
    return moe(req)


@app.post("/simulate/cell", response_model=SimCellResponse)
def simulate_cell_endpoint(req: SimCellRequest):
    return simulate_cell(req)
