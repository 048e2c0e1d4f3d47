"""FastAPI application. Engine errors map to 422, missing files to 404."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import DEFAULT_CONFIG
from ..errors import EngineError
from . import ops
from .models import (
    EvalRequest,
    EvalResponse,
    GradcheckRequest,
    HealthResponse,
    InferRequest,
    InferResponse,
    MakeWeightsRequest,
    MakeWeightsResponse,
    ProjectRequest,
    ProjectResponse,
    PseudolabelRequest,
    PseudolabelResponse,
    RunRequest,
    RunResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="weaksg", version=__version__)

    @app.exception_handler(EngineError)
    async def engine_error(_, exc: EngineError):
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(ValueError)
    async def value_error(_, exc: ValueError):
        # engine-level argument checks (edge_source, prediction shapes) raise
        # plain ValueError; surface them like any other contract violation
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(FileNotFoundError)
    async def missing_file(_, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"error": "FileNotFoundError",
                                                      "detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/config")
    def config():
        return DEFAULT_CONFIG.to_dict()

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest):
        return ValidateResponse(**ops.op_validate(req.scene_dir))

    @app.post("/project", response_model=ProjectResponse)
    def project(req: ProjectRequest):
        return ProjectResponse(**ops.op_project(req.scene_dir, req.out_path,
                                                req.config_path))

    @app.post("/pseudolabel", response_model=PseudolabelResponse)
    def pseudolabel(req: PseudolabelRequest):
        return PseudolabelResponse(
            **ops.op_pseudolabel(
                req.scene_dir,
                req.out_path,
                req.embeddings_dir,
                req.triplets_path,
                req.weights_path,
                req.config_path,
                req.seed,
                req.edge_source,
            )
        )

    @app.post("/infer", response_model=InferResponse)
    def infer(req: InferRequest):
        return InferResponse(
            **ops.op_infer(req.scene_dir, req.out_path, req.weights_path,
                           req.config_path, req.seed)
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest):
        return EvalResponse(**ops.op_eval(req.pred_path, req.gt_scene_dir,
                                          req.report_path))

    @app.post("/gradcheck")
    def gradcheck(req: GradcheckRequest):
        return ops.op_gradcheck(req.seed)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        return SynthResponse(**ops.op_synth(req.config_path, req.out_dir,
                                            req.seed, req.threads))

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        return RunResponse(
            **ops.op_run(
                req.scene_dir,
                req.report_path,
                req.weights_path,
                req.config_path,
                req.seed,
                req.threads,
                req.edge_source,
            )
        )

    @app.post("/make-weights", response_model=MakeWeightsResponse)
    def make_weights(req: MakeWeightsRequest):
        return MakeWeightsResponse(
            **ops.op_make_weights(req.scene_dir, req.out_path,
                                  req.config_path, req.seed)
        )

    return app
