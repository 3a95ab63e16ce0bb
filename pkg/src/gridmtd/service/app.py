"""FastAPI application exposing the workflow stages.

Every endpoint takes the common request shape (config by path or inline,
seed override, artifact directory), runs one stage, and answers with a
summary plus the paths of the artifacts it wrote.  Config mistakes come
back 400, failed pipeline stages 500, both with a typed error body.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..harness import ConfigError, ScenarioConfig, load_scenario, scenario_from_dict
from . import workflows as wf
from .schemas import (CalibrateResponse, DetectResponse, EvaluateResponse,
                      GenDataResponse, IdentifyRequest, IdentifyResponse,
                      MtdResponse, ReportResponse, RocResponse,
                      RunCycleResponse, TrainResponse, WorkflowRequest)

__all__ = ["app", "create_app", "resolve_request"]


def resolve_request(req: WorkflowRequest) -> tuple[ScenarioConfig, Path | None, Path]:
    """Turn the common request shape into (config, base_dir, out_dir)."""
    if req.config_path is not None:
        path = Path(req.config_path)
        cfg = load_scenario(path, seed=req.seed)
        base_dir = path.parent
    else:
        doc = dict(req.config or {})
        if req.seed is not None:
            doc["scenario"] = dict(doc.get("scenario", {}), seed=req.seed)
        cfg = scenario_from_dict(doc)
        base_dir = None
    out_dir = Path(req.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, base_dir, out_dir


def create_app() -> FastAPI:
    app = FastAPI(
        title="gridmtd",
        version=__version__,
        description="Measurement-integrity defense workflows: dataset synthesis, "
                    "detector training, attack identification, certified "
                    "susceptance dispatch, and end-to-end evaluation.")

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400,
                            content={"error": "config", "message": str(exc)})

    @app.exception_handler(Exception)
    async def _component_error(request: Request, exc: Exception):
        kind = "component" if isinstance(exc, wf.COMPONENT_ERRORS) else "internal"
        return JSONResponse(status_code=500,
                            content={"error": kind, "message": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/gen-data", response_model=GenDataResponse)
    def gen_data(req: WorkflowRequest):
        return wf.gen_data(*resolve_request(req))

    @app.post("/train", response_model=TrainResponse)
    def train(req: WorkflowRequest):
        return wf.train_model(*resolve_request(req))

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate(req: WorkflowRequest):
        return wf.calibrate_model(*resolve_request(req))

    @app.post("/detect", response_model=DetectResponse)
    def detect(req: WorkflowRequest):
        return wf.detect_stream(*resolve_request(req))

    @app.post("/identify", response_model=IdentifyResponse)
    def identify(req: IdentifyRequest):
        cfg, base_dir, out_dir = resolve_request(req)
        return wf.identify_once(cfg, base_dir, out_dir, step=req.step)

    @app.post("/mtd", response_model=MtdResponse)
    def mtd(req: WorkflowRequest):
        return wf.mtd_dispatch(*resolve_request(req))

    @app.post("/run-cycle", response_model=RunCycleResponse)
    def run_cycle(req: WorkflowRequest):
        return wf.cycle_run(*resolve_request(req))

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: WorkflowRequest):
        return wf.evaluate_records(*resolve_request(req))

    @app.post("/roc", response_model=RocResponse)
    def roc(req: WorkflowRequest):
        return wf.roc_sweep(*resolve_request(req))

    @app.post("/report", response_model=ReportResponse)
    def report(req: WorkflowRequest):
        return wf.report_build(*resolve_request(req))

    return app


app = create_app()
