"""Request and response bodies. Paths refer to the host the service runs on."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidateRequest(BaseModel):
    scene_dir: str


class ValidateResponse(BaseModel):
    ok: bool
    violations: list[str]


class ProjectRequest(BaseModel):
    scene_dir: str
    out_path: str
    config_path: str | None = None


class ProjectResponse(BaseModel):
    out_path: str
    instances: int
    picks: int


class PseudolabelRequest(BaseModel):
    scene_dir: str
    out_path: str
    embeddings_dir: str | None = None
    triplets_path: str | None = None
    weights_path: str | None = None
    config_path: str | None = None
    seed: int = 0
    edge_source: str = "post_gnn"


class PseudolabelResponse(BaseModel):
    out_path: str
    nodes: int
    edges: int
    hungarian: int
    direct: int
    edge_source: str


class InferRequest(BaseModel):
    scene_dir: str
    out_path: str
    weights_path: str | None = None
    config_path: str | None = None
    seed: int = 0


class InferResponse(BaseModel):
    out_path: str
    node_shape: list[int]
    edge_shape: list[int]


class EvalRequest(BaseModel):
    pred_path: str
    gt_scene_dir: str
    report_path: str


class EvalResponse(BaseModel):
    report_path: str
    report: dict
    text: str


class GradcheckRequest(BaseModel):
    seed: int = 0


class SynthRequest(BaseModel):
    config_path: str
    out_dir: str
    seed: int | None = None
    threads: int = Field(default=1, ge=1)


class SynthResponse(BaseModel):
    out_dir: str
    scenes: list[str]


class RunRequest(BaseModel):
    scene_dir: str
    report_path: str
    weights_path: str | None = None
    config_path: str | None = None
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    edge_source: str = "post_gnn"


class RunResponse(BaseModel):
    report_path: str
    report: dict


class MakeWeightsRequest(BaseModel):
    scene_dir: str
    out_path: str
    config_path: str | None = None
    seed: int = 0


class MakeWeightsResponse(BaseModel):
    out_path: str
    tensors: int
