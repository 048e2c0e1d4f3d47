"""One function per service operation.

Every op takes and returns plain values (paths, numbers, dicts) so the HTTP
layer and the CLI can share them verbatim. Ops are pure given their file
inputs; the seed is an explicit argument wherever randomness exists.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..config import DEFAULT_CONFIG, EngineConfig
from ..errors import BadScene, EngineError
from ..esagnn import AttentionConfig, forward
from ..featurizer import WeightBundle, engine_config_for, initial_embeddings
from ..formats import (
    read_embedding_dir,
    read_logits,
    read_scene_bundle,
    read_triplet_set,
    read_weights,
    render_report_text,
    write_assignment,
    write_logits,
    write_report,
    write_selections,
    write_weights,
)
from ..harness import (
    SynthConfig,
    default_weights_for,
    run_batch,
    run_pipeline,
    run_scene_dir,
    synth_batch,
)
from ..losses import contrastive_loss, cross_entropy, finite_diff_check, total_loss
from ..metrics import PredictionSet, evaluate
from ..projection import select_top_views
from ..scene_model import validate_scene


def _load_config(config_path: str | None) -> EngineConfig:
    if config_path is None:
        return DEFAULT_CONFIG
    return EngineConfig.from_file(config_path)


def _load_weights(
    weights_path: str | None, scene_dir: str, cfg: EngineConfig, seed: int
) -> tuple[WeightBundle, EngineConfig]:
    if weights_path is not None:
        weights = read_weights(weights_path)
        return weights, engine_config_for(weights, cfg)
    bundle, _ = read_scene_bundle(scene_dir)
    return default_weights_for(bundle, cfg, seed), cfg


def op_validate(scene_dir: str) -> dict:
    bundle, _ = read_scene_bundle(scene_dir)
    report = validate_scene(bundle)
    return {"ok": report.ok, "violations": list(report.violations)}


def op_project(scene_dir: str, out_path: str, config_path: str | None = None) -> dict:
    cfg = _load_config(config_path)
    bundle, _ = read_scene_bundle(scene_dir)
    selections = [
        select_top_views(
            bundle.instance_points(i),
            bundle.views,
            k=cfg.top_k_views,
            eps_d=cfg.eps_d,
            pad=cfg.crop_pad,
            instance_index=i,
        )
        for i in range(bundle.num_instances)
    ]
    write_selections(out_path, selections)
    return {
        "out_path": str(out_path),
        "instances": len(selections),
        "picks": sum(len(s.picks) for s in selections),
    }


def op_pseudolabel(
    scene_dir: str,
    out_path: str,
    embeddings_dir: str | None = None,
    triplets_path: str | None = None,
    weights_path: str | None = None,
    config_path: str | None = None,
    seed: int = 0,
    edge_source: str = "post_gnn",
) -> dict:
    cfg = _load_config(config_path)
    bundle, _ = read_scene_bundle(scene_dir)
    tables = read_embedding_dir(embeddings_dir or Path(scene_dir) / "embeddings")
    triplets = read_triplet_set(triplets_path or Path(scene_dir) / "triplets.json")
    weights, cfg = _load_weights(weights_path, scene_dir, cfg, seed)
    result = run_pipeline(
        bundle, tables, triplets, weights, cfg, gt=None, edge_source=edge_source
    )
    write_assignment(out_path, result.assignment)
    a = result.assignment
    return {
        "out_path": str(out_path),
        "nodes": len(a.nodes),
        "edges": len(a.edges),
        "hungarian": sum(1 for n in a.nodes if n.method == "hungarian"),
        "direct": sum(1 for n in a.nodes if n.method == "direct"),
        "edge_source": a.edge_source,
    }


def op_infer(
    scene_dir: str,
    out_path: str,
    weights_path: str | None = None,
    config_path: str | None = None,
    seed: int = 0,
) -> dict:
    cfg = _load_config(config_path)
    bundle, _ = read_scene_bundle(scene_dir)
    weights, cfg = _load_weights(weights_path, scene_dir, cfg, seed)
    state0 = initial_embeddings(bundle, weights, precision=cfg.precision)
    node_logits, edge_logits, _ = forward(
        state0, weights, AttentionConfig.from_engine(cfg)
    )
    write_logits(out_path, node_logits, edge_logits)
    return {
        "out_path": str(out_path),
        "node_shape": list(node_logits.shape),
        "edge_shape": list(edge_logits.shape),
    }


def op_eval(pred_path: str, gt_scene_dir: str, report_path: str) -> dict:
    node_logits, edge_logits = read_logits(pred_path)
    bundle, gt = read_scene_bundle(gt_scene_dir)
    if gt is None:
        raise BadScene(f"{gt_scene_dir} carries no ground truth to evaluate against")

    def softmax(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    pred = PredictionSet(
        node_probs=softmax(node_logits), edge_probs=softmax(edge_logits), gt=gt
    )
    table = evaluate(pred, bundle.predicate_vocab)
    report = {"format": "metric-report/1", "scene": bundle.name, "metrics": table}
    write_report(report_path, report)
    return {"report_path": str(report_path), "report": report,
            "text": render_report_text(table)}


def op_gradcheck(seed: int = 0) -> dict:
    """Finite-difference suite over every loss; returns worst errors."""
    rng = np.random.default_rng(seed)
    k, d, c_obj, c_rel = 6, 32, 9, 5
    v0 = 0.3 * rng.standard_normal((k, d))
    f_img = rng.standard_normal((k, d))
    f_img = f_img / np.linalg.norm(f_img, axis=1, keepdims=True)
    node_logits = rng.standard_normal((k, c_obj))
    node_labels = rng.integers(c_obj, size=k)
    edge_logits = rng.standard_normal((k * (k - 1), c_rel))
    edge_labels = rng.integers(c_rel, size=k * (k - 1))

    def contrastive_fn(inp):
        loss, dv, df = contrastive_loss(inp["v0"], inp["f_img"], 0.1)
        return loss, {"v0": dv, "f_img": df}

    def ce_fn(inp):
        loss, grad = cross_entropy(inp["logits"], node_labels)
        return loss, {"logits": grad}

    def total_fn(inp):
        rep = total_loss(
            inp["node_logits"], node_labels, inp["edge_logits"], edge_labels,
            inp["v0"], f_img,
        )
        return rep.l_total, {
            "node_logits": rep.gradients["node_logits"],
            "edge_logits": rep.gradients["edge_logits"],
            "v0": rep.gradients["v0"],
        }

    eps = 1e-5
    out = {
        "contrastive": finite_diff_check(
            contrastive_fn, {"v0": v0, "f_img": f_img}, eps=eps, seed=seed
        ),
        "cross_entropy": finite_diff_check(
            ce_fn, {"logits": node_logits}, eps=eps, seed=seed
        ),
        "total": finite_diff_check(
            total_fn,
            {"node_logits": node_logits, "edge_logits": edge_logits, "v0": v0},
            eps=eps,
            seed=seed,
        ),
    }
    return {name: res for name, res in out.items()}


def op_synth(config_path: str, out_dir: str, seed: int | None = None,
             threads: int = 1) -> dict:
    import json

    data = json.loads(Path(config_path).read_text(encoding="utf-8"))
    count = int(data.pop("count", 1))
    cfg = SynthConfig.from_dict(data)
    if seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=seed)
    paths = synth_batch(cfg, count, out_dir, threads=threads)
    return {"out_dir": str(out_dir), "scenes": [str(p) for p in paths]}


def op_run(
    scene_dir: str,
    report_path: str,
    weights_path: str | None = None,
    config_path: str | None = None,
    seed: int = 0,
    threads: int = 1,
    edge_source: str = "post_gnn",
) -> dict:
    """Single scene directory, or a directory of scene_* subdirectories."""
    cfg = _load_config(config_path)
    root = Path(scene_dir)
    if (root / "scene.json").exists():
        weights = None
        if weights_path is not None:
            weights = read_weights(weights_path)
            cfg = engine_config_for(weights, cfg)
        result = run_scene_dir(root, weights, cfg, seed, edge_source)
        report = result.report
    else:
        scene_dirs = sorted(p for p in root.glob("scene_*") if (p / "scene.json").exists())
        if not scene_dirs:
            raise BadScene(f"{root} holds neither a scene nor scene_* directories")
        report = run_batch(scene_dirs, cfg, seed, edge_source, threads=threads)
    write_report(report_path, report)
    return {"report_path": str(report_path), "report": report}


def op_make_weights(
    scene_dir: str, out_path: str, config_path: str | None = None, seed: int = 0
) -> dict:
    """Seeded random weights sized for a scene's vocabularies."""
    cfg = _load_config(config_path)
    bundle, _ = read_scene_bundle(scene_dir)
    weights = default_weights_for(bundle, cfg, seed)
    write_weights(out_path, weights)
    return {"out_path": str(out_path), "tensors": len(weights.names())}
