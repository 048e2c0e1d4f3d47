"""Plain-array bindings over the weaksg engine for host training loops.

A BridgeSession pins vocabularies, weights, and configuration once; the two
operations validate array shapes and dtypes up front, then hand the data to
the engine unchanged. No numerical logic lives here, so outputs are
bit-identical to the engine's file-based path on equal inputs. Sessions and
results are immutable and the module keeps no state, which makes concurrent
calls from host threads safe.

Array contracts. Camera views are mappings with the same field names as the
scene manifest (image_id, width, height, intrinsics, extrinsics, depth_map).
Embedding tables are mappings kind -> {tokens, vectors, normalized?, note?}
where vectors is one matrix with a row per token; float32 rows are used
without copying. Ground truth is a mapping {node_labels, edge_labels} with
edge_labels as (i, j, predicate_id) triples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import weaksg
from weaksg import (
    DEFAULT_CONFIG,
    CameraView,
    EmbeddingTable,
    EmptySupervision,
    EngineConfig,
    PredictionSet,
    PseudoLabelAssignment,
    SceneBundle,
    SceneGraphGT,
    TripletSet,
    WeightBundle,
    engine_config_for,
    evaluate,
    run_pipeline,
)
from weaksg.formats import (
    EMBEDDING_FILES,
    read_embedding_dir,
    read_scene_bundle,
    read_triplet_set,
    read_weights,
)
from weaksg.harness import EDGE_SOURCES

__version__ = "0.1.0"

_CAMERA_KEYS = ("image_id", "width", "height", "intrinsics", "extrinsics", "depth_map")
_TABLE_KEYS = ("tokens", "vectors", "normalized", "note")
_GT_KEYS = ("node_labels", "edge_labels")


class VersionMismatch(RuntimeError):
    """Installed engine version differs from the one these bindings target."""


class BridgeInputError(ValueError):
    """An argument failed shape, dtype, or layout validation at the boundary."""


def _float_matrix(name: str, value, *, rows: int | None = None,
                  cols: int | None = None, contiguous: bool = False) -> np.ndarray:
    arr = np.asarray(value)
    if arr.ndim != 2:
        raise BridgeInputError(f"{name} must be a 2D array, got ndim {arr.ndim}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise BridgeInputError(f"{name} must have a float dtype, got {arr.dtype}")
    if rows is not None and arr.shape[0] != rows:
        raise BridgeInputError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise BridgeInputError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if contiguous and not arr.flags["C_CONTIGUOUS"]:
        raise BridgeInputError(f"{name} must be C-contiguous")
    return arr


def _int_vector(name: str, value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 1:
        raise BridgeInputError(f"{name} must be a 1D sequence, got ndim {arr.ndim}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise BridgeInputError(f"{name} must have an integer dtype, got {arr.dtype}")
    return arr.astype(np.int64)


def _keys_exactly(name: str, mapping, required: tuple[str, ...],
                  optional: tuple[str, ...] = ()) -> None:
    try:
        keys = set(mapping)
    except TypeError:
        raise BridgeInputError(f"{name} must be a mapping")
    missing = [k for k in required if k not in keys]
    unknown = sorted(keys - set(required) - set(optional))
    if missing:
        raise BridgeInputError(f"{name} missing keys {missing}")
    if unknown:
        raise BridgeInputError(f"{name} has unknown keys {unknown}")


def _camera(index: int, cam) -> CameraView:
    name = f"cameras[{index}]"
    _keys_exactly(name, cam, _CAMERA_KEYS)
    width, height = int(cam["width"]), int(cam["height"])
    if width <= 0 or height <= 0:
        raise BridgeInputError(f"{name} width/height must be positive")
    intr = _float_matrix(f"{name}.intrinsics", cam["intrinsics"], rows=3, cols=3)
    extr = np.asarray(cam["extrinsics"])
    if extr.shape not in ((3, 4), (4, 4)) or not np.issubdtype(extr.dtype, np.floating):
        raise BridgeInputError(
            f"{name}.extrinsics must be a float 3x4 or 4x4 array, got {extr.dtype} {extr.shape}"
        )
    depth = _float_matrix(f"{name}.depth_map", cam["depth_map"],
                          rows=height, cols=width, contiguous=True)
    return CameraView(
        image_id=str(cam["image_id"]), width=width, height=height,
        intrinsics=intr, extrinsics=extr, depth_map=depth,
    )


def _tables(embedding_arrays) -> dict[str, EmbeddingTable]:
    _keys_exactly("embedding_arrays", embedding_arrays, tuple(EMBEDDING_FILES))
    out: dict[str, EmbeddingTable] = {}
    for kind in EMBEDDING_FILES:
        spec = embedding_arrays[kind]
        name = f"embedding_arrays[{kind!r}]"
        _keys_exactly(name, spec, _TABLE_KEYS[:2], _TABLE_KEYS[2:])
        tokens = [str(t) for t in spec["tokens"]]
        if len(tokens) != len(set(tokens)):
            raise BridgeInputError(f"{name} has duplicate tokens")
        vectors = _float_matrix(f"{name}.vectors", spec["vectors"],
                                rows=len(tokens), contiguous=True)
        out[kind] = EmbeddingTable(
            kind=kind,
            dim=vectors.shape[1],
            normalized=bool(spec.get("normalized", False)),
            note=str(spec.get("note", "")),
            rows={tok: vectors[i] for i, tok in enumerate(tokens)},
        )
    return out


def _triplets(triplet_entries) -> TripletSet:
    entries = list(triplet_entries)
    if not entries:
        raise EmptySupervision("triplet set has no entries")
    for i, entry in enumerate(entries):
        if len(tuple(entry)) != 4:
            raise BridgeInputError(
                f"triplet_entries[{i}] must be (subject, predicate, object, count)"
            )
    return TripletSet(entries=tuple(tuple(e) for e in entries))


@dataclass(frozen=True)
class BridgeSession:
    """Immutable handle to the vocabularies, weights, and configuration one
    host uses for a series of calls.

    config, when given, supplies the non-architectural settings; the widths
    and depths always come from the weight bundle's metadata, matching how the
    engine treats a loaded weight file.
    """

    object_vocab: tuple[str, ...]
    predicate_vocab: tuple[str, ...]
    weights: WeightBundle
    config: EngineConfig | None = None
    version: str = field(init=False)

    def __post_init__(self):
        core = weaksg.__version__
        if core != __version__:
            raise VersionMismatch(
                f"bindings {__version__} require engine {__version__}, found {core}"
            )
        object.__setattr__(self, "object_vocab", tuple(str(n) for n in self.object_vocab))
        object.__setattr__(self, "predicate_vocab", tuple(str(n) for n in self.predicate_vocab))
        meta = self.weights.meta
        if meta.num_object_classes != len(self.object_vocab):
            raise BridgeInputError(
                f"weights carry {meta.num_object_classes} object classes, "
                f"vocabulary has {len(self.object_vocab)}"
            )
        if meta.num_predicate_classes != len(self.predicate_vocab):
            raise BridgeInputError(
                f"weights carry {meta.num_predicate_classes} predicate classes, "
                f"vocabulary has {len(self.predicate_vocab)}"
            )
        base = self.config if self.config is not None else DEFAULT_CONFIG
        object.__setattr__(self, "config", engine_config_for(self.weights, base))
        object.__setattr__(self, "version", core)


@dataclass(frozen=True)
class BridgeLabels:
    """Pseudo-labels in plain-array form plus the exact engine artifact."""

    assignment: PseudoLabelAssignment
    node_labels: tuple[str, ...]        # matched category name per instance
    node_label_ids: np.ndarray          # index into the session object vocab
    node_methods: tuple[str, ...]       # "hungarian" | "direct"
    node_scores: np.ndarray
    edge_index: tuple[tuple[int, int], ...]
    edge_labels: tuple[str | None, ...]
    edge_label_ids: np.ndarray          # index into the session predicate vocab
    edge_scores: np.ndarray             # NaN where the edge has no supervision


def bridge_pseudolabel(
    session: BridgeSession,
    points,
    masks,
    cameras,
    embedding_arrays,
    triplet_entries,
    edge_source: str = "post_gnn",
) -> BridgeLabels:
    """Node and relation pseudo-labels for one scene given as plain arrays.

    Equals the engine's pseudolabel command on the same inputs, field for
    field; writing the returned assignment reproduces its output file byte
    for byte.
    """
    if edge_source not in EDGE_SOURCES:
        raise BridgeInputError(f"edge_source must be one of {EDGE_SOURCES}")
    pts = _float_matrix("points", points, cols=3, contiguous=True)
    mask_arrays = [_int_vector(f"masks[{i}]", m) for i, m in enumerate(masks)]
    views = tuple(_camera(i, cam) for i, cam in enumerate(cameras))
    tables = _tables(embedding_arrays)
    triplets = _triplets(triplet_entries)

    bundle = SceneBundle(
        name="bridge",
        points=pts,
        masks=tuple(tuple(m.tolist()) for m in mask_arrays),
        views=views,
        object_vocab=session.object_vocab,
        predicate_vocab=session.predicate_vocab,
    )
    result = run_pipeline(
        bundle, tables, triplets, session.weights, session.config,
        gt=None, edge_source=edge_source,
    )
    a = result.assignment
    return BridgeLabels(
        assignment=a,
        node_labels=tuple(a.categories[n.label] for n in a.nodes),
        node_label_ids=result.node_pl.astype(np.int64),
        node_methods=tuple(n.method for n in a.nodes),
        node_scores=np.array([n.score for n in a.nodes], dtype=np.float64),
        edge_index=tuple((e.i, e.j) for e in a.edges),
        edge_labels=tuple(e.predicate for e in a.edges),
        edge_label_ids=result.edge_pl.astype(np.int64),
        edge_scores=np.array(
            [np.nan if e.score is None else e.score for e in a.edges],
            dtype=np.float64,
        ),
    )


def bridge_eval(session: BridgeSession, node_probs, edge_probs, gt) -> dict:
    """Metric table for predicted probabilities against ground truth.

    gt is {"node_labels": ..., "edge_labels": ...} with the manifest's field
    meanings. Probability rows must sum to 1; the engine enforces that and
    this wrapper only pins the widths to the session vocabularies.
    """
    _keys_exactly("gt", gt, _GT_KEYS)
    node_labels = _int_vector("gt['node_labels']", gt["node_labels"])
    raw_edges = np.asarray(gt["edge_labels"])
    if raw_edges.size == 0:
        edge_labels = np.zeros((0, 3), dtype=np.int64)
    elif raw_edges.ndim == 2 and raw_edges.shape[1] == 3 \
            and np.issubdtype(raw_edges.dtype, np.integer):
        edge_labels = raw_edges.astype(np.int64)
    else:
        raise BridgeInputError(
            f"gt['edge_labels'] must be integer (i, j, predicate_id) triples, "
            f"got {raw_edges.dtype} {raw_edges.shape}"
        )
    k = node_labels.shape[0]
    nodes = _float_matrix("node_probs", node_probs, rows=k,
                          cols=len(session.object_vocab))
    edges = _float_matrix("edge_probs", edge_probs, rows=k * (k - 1),
                          cols=len(session.predicate_vocab))
    c_rel = len(session.predicate_vocab)
    if node_labels.size and (node_labels.min() < 0
                             or node_labels.max() >= len(session.object_vocab)):
        raise BridgeInputError("gt['node_labels'] outside the object vocabulary")
    if edge_labels.size and (edge_labels[:, 2].min() < 0
                             or edge_labels[:, 2].max() >= c_rel):
        raise BridgeInputError("gt['edge_labels'] predicate outside the vocabulary")
    gt_obj = SceneGraphGT(
        node_labels=tuple(int(x) for x in node_labels),
        edge_labels=tuple((int(i), int(j), int(p)) for i, j, p in edge_labels),
    )
    pred = PredictionSet(node_probs=nodes, edge_probs=edges, gt=gt_obj)
    return evaluate(pred, session.predicate_vocab)


@dataclass(frozen=True)
class SceneArrays:
    """A stored scene flattened into bridge_pseudolabel's argument layout."""

    name: str
    object_vocab: tuple[str, ...]
    predicate_vocab: tuple[str, ...]
    points: np.ndarray
    masks: tuple[np.ndarray, ...]
    cameras: tuple[dict, ...]
    embedding_arrays: dict[str, dict]
    triplet_entries: tuple[tuple[str, str, str, int], ...]
    ground_truth: dict | None


def load_scene_arrays(scene_path: str | Path) -> SceneArrays:
    """Read a scene directory into plain arrays (bundle at the top level,
    triplets.json and embeddings/ beside it)."""
    root = Path(scene_path)
    bundle, gt = read_scene_bundle(root)
    triplets = read_triplet_set(root / "triplets.json")
    tables = read_embedding_dir(root / "embeddings")
    cameras = tuple(
        {
            "image_id": v.image_id,
            "width": v.width,
            "height": v.height,
            "intrinsics": v.intrinsics,
            "extrinsics": v.extrinsics,
            "depth_map": v.depth_map,
        }
        for v in bundle.views
    )
    embedding_arrays = {}
    for kind, table in tables.items():
        tokens = tuple(sorted(table.rows))
        embedding_arrays[kind] = {
            "tokens": tokens,
            "vectors": np.stack([table.rows[t] for t in tokens]),
            "normalized": table.normalized,
            "note": table.note,
        }
    ground_truth = None
    if gt is not None:
        ground_truth = {
            "node_labels": np.asarray(gt.node_labels, dtype=np.int64),
            "edge_labels": np.asarray(gt.edge_labels, dtype=np.int64).reshape(-1, 3),
        }
    return SceneArrays(
        name=bundle.name,
        object_vocab=bundle.object_vocab,
        predicate_vocab=bundle.predicate_vocab,
        points=bundle.points,
        masks=tuple(np.asarray(m, dtype=np.int64) for m in bundle.masks),
        cameras=cameras,
        embedding_arrays=embedding_arrays,
        triplet_entries=triplets.entries,
        ground_truth=ground_truth,
    )


def load_session(
    scene_path: str | Path,
    weights_path: str | Path,
    config_path: str | Path | None = None,
) -> BridgeSession:
    """Session with vocabularies from a scene bundle and weights from a file."""
    bundle, _ = read_scene_bundle(scene_path)
    weights = read_weights(weights_path)
    cfg = EngineConfig.from_file(config_path) if config_path is not None else None
    return BridgeSession(
        object_vocab=bundle.object_vocab,
        predicate_vocab=bundle.predicate_vocab,
        weights=weights,
        config=cfg,
    )
