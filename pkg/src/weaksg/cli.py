"""Command line front end; a thin client over the service ops.

Every subcommand accepts --seed and --threads. --threads only fans work out
across independent scenes and never changes any output; single-scene commands
accept it for interface uniformity and ignore it.
"""

from __future__ import annotations

import sys

import click
from click.core import ParameterSource

from .errors import EngineError
from .formats import render_report_text
from .service import ops


def common_options(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Seed for every random draw.")(fn)
    fn = click.option("--threads", type=int, default=1, show_default=True,
                      help="Worker threads across scenes; never changes output.")(fn)
    return fn


@click.group()
def main():
    """Weak-supervision engine for 3D scene graph generation."""


def _fail(exc: EngineError):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


@main.command()
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@common_options
def project(scene_dir, out_path, config_path, seed, threads):
    """Write per-instance view selections for a scene bundle."""
    try:
        res = ops.op_project(scene_dir, out_path, config_path)
    except EngineError as exc:
        _fail(exc)
    click.echo(f"wrote {res['out_path']}: {res['picks']} picks over "
               f"{res['instances']} instances")


@main.command()
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "embeddings_dir", required=True,
              type=click.Path(exists=True))
@click.option("--triplets", "triplets_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              help="Weight file for the edge embeddings; seeded random when absent.")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--edge-source", type=click.Choice(["post_gnn", "initial"]),
              default="post_gnn", show_default=True)
@common_options
def pseudolabel(scene_dir, embeddings_dir, triplets_path, out_path, weights_path,
                config_path, edge_source, seed, threads):
    """Generate node and relation pseudo-labels for a scene."""
    try:
        res = ops.op_pseudolabel(
            scene_dir, out_path, embeddings_dir, triplets_path, weights_path,
            config_path, seed, edge_source,
        )
    except EngineError as exc:
        _fail(exc)
    click.echo(
        f"wrote {res['out_path']}: {res['nodes']} nodes "
        f"({res['hungarian']} hungarian, {res['direct']} direct), "
        f"{res['edges']} edges from {res['edge_source']}"
    )


@main.command()
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@common_options
def infer(scene_dir, weights_path, out_path, config_path, seed, threads):
    """Run the forward pass and write node and edge logits."""
    try:
        res = ops.op_infer(scene_dir, out_path, weights_path, config_path, seed)
    except EngineError as exc:
        _fail(exc)
    click.echo(f"wrote {res['out_path']}: nodes {res['node_shape']}, "
               f"edges {res['edge_shape']}")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_scene_dir", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@common_options
def eval_cmd(pred_path, gt_scene_dir, report_path, seed, threads):
    """Score logits against a bundle's ground truth; print the metric table."""
    try:
        res = ops.op_eval(pred_path, gt_scene_dir, report_path)
    except EngineError as exc:
        _fail(exc)
    click.echo(res["text"], nl=False)
    click.echo(f"wrote {res['report_path']}")


@main.command()
@common_options
def gradcheck(seed, threads):
    """Finite-difference gradient checks; prints worst error per loss."""
    res = ops.op_gradcheck(seed)
    for name, r in res.items():
        click.echo(f"{name}: worst_rel_err {r['worst_rel_err']:.3e} "
                   f"over {r['coords_checked']} coords")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@common_options
@click.pass_context
def synth(ctx, config_path, out_dir, seed, threads):
    """Generate synthetic scene directories from a config file."""
    # an explicit --seed overrides the config file; the default does not
    if ctx.get_parameter_source("seed") is ParameterSource.DEFAULT:
        seed = None
    try:
        res = ops.op_synth(config_path, out_dir, seed, threads)
    except EngineError as exc:
        _fail(exc)
    click.echo(f"wrote {len(res['scenes'])} scenes under {res['out_dir']}")


@main.command()
@click.option("--scene-dir", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--weights", "weights_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--edge-source", type=click.Choice(["post_gnn", "initial"]),
              default="post_gnn", show_default=True)
@common_options
def run(scene_dir, report_path, weights_path, config_path, edge_source, seed, threads):
    """Full pipeline over one scene directory or a directory of scenes."""
    try:
        res = ops.op_run(scene_dir, report_path, weights_path, config_path,
                         seed, threads, edge_source)
    except EngineError as exc:
        _fail(exc)
    report = res["report"]
    if "mean_pseudo_labels" in report:
        click.echo(render_report_text(report["mean_pseudo_labels"]), nl=False)
    elif "pseudo_labels" in report:
        click.echo(render_report_text(report["pseudo_labels"]), nl=False)
    click.echo(f"wrote {res['report_path']}")


@main.command("make-weights")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@common_options
def make_weights(scene_dir, out_path, config_path, seed, threads):
    """Write seeded random weights sized for a scene's vocabularies."""
    try:
        res = ops.op_make_weights(scene_dir, out_path, config_path, seed)
    except EngineError as exc:
        _fail(exc)
    click.echo(f"wrote {res['out_path']} ({res['tensors']} tensors)")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@common_options
def serve(host, port, seed, threads):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
