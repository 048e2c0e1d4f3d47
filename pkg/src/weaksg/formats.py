"""Serialization for every pipeline artifact.

Field names here are the format contract (see docs/FORMATS.md):

  scene bundle   directory: scene.json manifest + flat little-endian float32
                 blobs for points and per-view depth maps; masks, vocabularies
                 and optional ground truth inline in the manifest
  triplet set    JSON: {"entries": [[subject, predicate, object, count], ...]}
  embeddings     binary .emb: magic EMB1, JSON header line
                 (kind, dim, normalized, note, count), then per record a
                 u32-length-prefixed UTF-8 token and dim float32 values
  weights        binary .wts: magic WTS1, JSON header line (meta, count), then
                 name-sorted records (u32 name length, name, u32 ndim,
                 u32 shape..., row-major float32 data)
  logits         binary .lgt: magic LGT1, JSON header line with shapes, then
                 node and edge float32 blocks
  selections     TSV lines: instance, view, image token, score (6 decimals),
                 crop rect
  assignments    TSV lines for node and edge pseudo-labels ("-" = None/absent)
  reports        canonical JSON (sorted keys); floats round-trip via repr

All multi-byte values are little-endian. Binary payloads are float32, so
read -> write -> read is byte-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadFormat
from .featurizer import WeightBundle, WeightMeta
from .projection import ViewPick, ViewSelection
from .pseudolabel import EdgeAssignment, EmbeddingTable, NodeAssignment, PseudoLabelAssignment
from .scene_model import CameraView, SceneBundle, SceneGraphGT, TripletSet

EMB_MAGIC = b"EMB1\n"
WTS_MAGIC = b"WTS1\n"
LGT_MAGIC = b"LGT1\n"


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _matrix(rows: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(rows, dtype=np.float64)]


# ---------------------------------------------------------------- scene bundle

def write_scene_bundle(
    path: str | Path, bundle: SceneBundle, gt: SceneGraphGT | None = None
) -> None:
    """Write the manifest and blobs into directory `path` (created if needed)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "points.f32").write_bytes(
        np.ascontiguousarray(bundle.points, dtype="<f4").tobytes()
    )
    views = []
    for vi, view in enumerate(bundle.views):
        blob = f"depth_{vi:03d}.f32"
        (root / blob).write_bytes(
            np.ascontiguousarray(view.depth_map, dtype="<f4").tobytes()
        )
        views.append(
            {
                "image_id": view.image_id,
                "width": view.width,
                "height": view.height,
                "intrinsics": _matrix(view.intrinsics),
                "extrinsics": _matrix(view.extrinsics),
                "depth_blob": blob,
            }
        )
    manifest = {
        "format": "scene-bundle/1",
        "name": bundle.name,
        "num_points": int(bundle.points.shape[0]),
        "points_blob": "points.f32",
        "masks": [list(m) for m in bundle.masks],
        "object_vocab": list(bundle.object_vocab),
        "predicate_vocab": list(bundle.predicate_vocab),
        "views": views,
        "ground_truth": None
        if gt is None
        else {
            "node_labels": list(gt.node_labels),
            "edge_labels": [list(e) for e in gt.edge_labels],
        },
    }
    (root / "scene.json").write_text(_canonical_json(manifest), encoding="utf-8")


def read_scene_bundle(path: str | Path) -> tuple[SceneBundle, SceneGraphGT | None]:
    root = Path(path)
    try:
        manifest = json.loads((root / "scene.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise BadFormat(f"{root} is not a scene bundle (missing scene.json)")
    if manifest.get("format") != "scene-bundle/1":
        raise BadFormat(f"unknown scene bundle format {manifest.get('format')!r}")
    n = int(manifest["num_points"])
    raw = (root / manifest["points_blob"]).read_bytes()
    points = np.frombuffer(raw, dtype="<f4")
    if points.size != n * 3:
        raise BadFormat(f"points blob holds {points.size} floats, expected {n * 3}")
    views = []
    for vd in manifest["views"]:
        raw = (root / vd["depth_blob"]).read_bytes()
        depth = np.frombuffer(raw, dtype="<f4")
        h, w = int(vd["height"]), int(vd["width"])
        if depth.size != h * w:
            raise BadFormat(f"depth blob {vd['depth_blob']} size mismatch")
        views.append(
            CameraView(
                image_id=vd["image_id"],
                width=w,
                height=h,
                intrinsics=np.asarray(vd["intrinsics"], dtype=np.float64),
                extrinsics=np.asarray(vd["extrinsics"], dtype=np.float64),
                depth_map=depth.reshape(h, w),
            )
        )
    bundle = SceneBundle(
        name=manifest["name"],
        points=points.reshape(n, 3),
        masks=tuple(tuple(m) for m in manifest["masks"]),
        views=tuple(views),
        object_vocab=tuple(manifest["object_vocab"]),
        predicate_vocab=tuple(manifest["predicate_vocab"]),
    )
    gt = None
    if manifest.get("ground_truth") is not None:
        g = manifest["ground_truth"]
        gt = SceneGraphGT(
            node_labels=tuple(g["node_labels"]),
            edge_labels=tuple(tuple(e) for e in g["edge_labels"]),
        )
    return bundle, gt


# ----------------------------------------------------------------- triplet set

def write_triplet_set(path: str | Path, triplets: TripletSet) -> None:
    payload = {
        "format": "triplet-set/1",
        "entries": [[s, p, o, n] for s, p, o, n in triplets.entries],
    }
    Path(path).write_text(_canonical_json(payload), encoding="utf-8")


def read_triplet_set(path: str | Path) -> TripletSet:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != "triplet-set/1":
        raise BadFormat(f"unknown triplet set format {data.get('format')!r}")
    return TripletSet(entries=tuple(tuple(e) for e in data["entries"]))


# ------------------------------------------------------------------ embeddings

def write_embedding_table(path: str | Path, table: EmbeddingTable) -> None:
    header = {
        "kind": table.kind,
        "dim": table.dim,
        "normalized": table.normalized,
        "note": table.note,
        "count": len(table.rows),
    }
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for token in sorted(table.rows):
            enc = token.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(np.ascontiguousarray(table.rows[token], dtype="<f4").tobytes())


def read_embedding_table(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        if fh.read(len(EMB_MAGIC)) != EMB_MAGIC:
            raise BadFormat(f"{path}: not an embedding file")
        header = json.loads(fh.readline().decode("utf-8"))
        dim = int(header["dim"])
        rows: dict[str, np.ndarray] = {}
        for _ in range(int(header["count"])):
            head = fh.read(4)
            if len(head) != 4:
                raise BadFormat(f"{path}: truncated record header")
            (tlen,) = struct.unpack("<I", head)
            token = fh.read(tlen).decode("utf-8")
            blob = fh.read(4 * dim)
            if len(blob) != 4 * dim:
                raise BadFormat(f"{path}: truncated record for token {token!r}")
            rows[token] = np.frombuffer(blob, dtype="<f4")
        if fh.read(1):
            raise BadFormat(f"{path}: trailing bytes after declared records")
    return EmbeddingTable(
        kind=header["kind"],
        dim=dim,
        normalized=bool(header["normalized"]),
        note=header.get("note", ""),
        rows=rows,
    )


EMBEDDING_FILES = {
    "image": "images.emb",
    "object_text": "object_text.emb",
    "triplet_text": "triplet_text.emb",
}


def write_embedding_dir(path: str | Path, tables: dict[str, EmbeddingTable]) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for kind, table in tables.items():
        write_embedding_table(root / EMBEDDING_FILES[kind], table)


def read_embedding_dir(path: str | Path) -> dict[str, EmbeddingTable]:
    root = Path(path)
    out = {}
    for kind, fname in EMBEDDING_FILES.items():
        f = root / fname
        if f.exists():
            out[kind] = read_embedding_table(f)
    if not out:
        raise BadFormat(f"{root} holds no embedding tables")
    return out


# --------------------------------------------------------------------- weights

def write_weights(path: str | Path, weights: WeightBundle) -> None:
    names = weights.names()
    header = {"meta": weights.meta.to_dict(), "count": len(names)}
    with open(path, "wb") as fh:
        fh.write(WTS_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for name in names:
            arr = weights[name]
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_weights(path: str | Path) -> WeightBundle:
    with open(path, "rb") as fh:
        if fh.read(len(WTS_MAGIC)) != WTS_MAGIC:
            raise BadFormat(f"{path}: not a weight file")
        header = json.loads(fh.readline().decode("utf-8"))
        meta = WeightMeta.from_dict(header["meta"])
        arrays: dict[str, np.ndarray] = {}
        for _ in range(int(header["count"])):
            head = fh.read(4)
            if len(head) != 4:
                raise BadFormat(f"{path}: truncated record header")
            (nlen,) = struct.unpack("<I", head)
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            blob = fh.read(4 * count)
            if len(blob) != 4 * count:
                raise BadFormat(f"{path}: truncated record {name!r}")
            arrays[name] = np.frombuffer(blob, dtype="<f4").reshape(shape)
        if fh.read(1):
            raise BadFormat(f"{path}: trailing bytes after declared records")
    return WeightBundle(meta, arrays)  # loader rejects unknown/missing names


# ---------------------------------------------------------------------- logits

def write_logits(
    path: str | Path, node_logits: np.ndarray, edge_logits: np.ndarray
) -> None:
    node = np.ascontiguousarray(node_logits, dtype="<f4")
    edge = np.ascontiguousarray(edge_logits, dtype="<f4")
    header = {"node_shape": list(node.shape), "edge_shape": list(edge.shape)}
    with open(path, "wb") as fh:
        fh.write(LGT_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(node.tobytes())
        fh.write(edge.tobytes())


def read_logits(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(LGT_MAGIC)) != LGT_MAGIC:
            raise BadFormat(f"{path}: not a logits file")
        header = json.loads(fh.readline().decode("utf-8"))
        nshape = tuple(header["node_shape"])
        eshape = tuple(header["edge_shape"])
        node = np.frombuffer(fh.read(4 * int(np.prod(nshape))), dtype="<f4")
        edge = np.frombuffer(fh.read(4 * int(np.prod(eshape))), dtype="<f4")
        if node.size != np.prod(nshape) or edge.size != np.prod(eshape):
            raise BadFormat(f"{path}: truncated logits blocks")
        if fh.read(1):
            raise BadFormat(f"{path}: trailing bytes")
    return node.reshape(nshape), edge.reshape(eshape)


# ------------------------------------------------------------------ selections

def write_selections(path: str | Path, selections: list[ViewSelection]) -> None:
    lines = ["# view-selection/1"]
    for sel in selections:
        for pick in sel.picks:
            x0, y0, x1, y1 = pick.crop_rect
            lines.append(
                f"{sel.instance_index}\t{pick.view_id}\t{pick.image_id}"
                f"\t{pick.score:.6f}\t{x0}\t{y0}\t{x1}\t{y1}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_selections(path: str | Path) -> list[ViewSelection]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "# view-selection/1":
        raise BadFormat(f"{path}: not a selection file")
    picks: dict[int, list[ViewPick]] = {}
    for line in lines[1:]:
        if not line:
            continue
        inst, vid, image_id, score, x0, y0, x1, y1 = line.split("\t")
        picks.setdefault(int(inst), []).append(
            ViewPick(
                view_id=int(vid),
                image_id=image_id,
                score=float(score),
                crop_rect=(int(x0), int(y0), int(x1), int(y1)),
            )
        )
    return [ViewSelection(i, tuple(p)) for i, p in sorted(picks.items())]


# ----------------------------------------------------------------- assignments

def write_assignment(path: str | Path, assignment: PseudoLabelAssignment) -> None:
    lines = ["# pseudo-labels/1", f"# edge_source\t{assignment.edge_source}"]
    lines.append("# categories\t" + "\t".join(assignment.categories))
    for idx, node in enumerate(assignment.nodes):
        lines.append(
            f"node\t{idx}\t{assignment.categories[node.label]}"
            f"\t{node.method}\t{node.score:.6f}"
        )
    for edge in assignment.edges:
        pred = "-" if edge.predicate is None else edge.predicate
        score = "-" if edge.score is None else f"{edge.score:.6f}"
        lines.append(f"edge\t{edge.i}\t{edge.j}\t{pred}\t{score}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_assignment(path: str | Path) -> PseudoLabelAssignment:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "# pseudo-labels/1":
        raise BadFormat(f"{path}: not an assignment file")
    edge_source = "post_gnn"
    categories: tuple[str, ...] = ()
    nodes: list[NodeAssignment] = []
    edges: list[EdgeAssignment] = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split("\t")
        if parts[0] == "# edge_source":
            edge_source = parts[1]
        elif parts[0] == "# categories":
            categories = tuple(parts[1:])
        elif parts[0] == "node":
            _, _, name, method, score = parts
            nodes.append(
                NodeAssignment(
                    label=categories.index(name), method=method, score=float(score)
                )
            )
        elif parts[0] == "edge":
            _, i, j, pred, score = parts
            edges.append(
                EdgeAssignment(
                    i=int(i),
                    j=int(j),
                    predicate=None if pred == "-" else pred,
                    score=None if score == "-" else float(score),
                )
            )
        else:
            raise BadFormat(f"{path}: unknown line kind {parts[0]!r}")
    return PseudoLabelAssignment(
        categories=categories, nodes=tuple(nodes), edges=tuple(edges),
        edge_source=edge_source,
    )


# --------------------------------------------------------------------- reports

def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(_canonical_json(report), encoding="utf-8")


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def render_report_text(report: dict) -> str:
    """Flatten a (possibly nested) report dict into an aligned text table."""
    rows: list[tuple[str, str]] = []

    def walk(prefix: str, obj) -> None:
        if isinstance(obj, dict):
            for key in obj:
                walk(f"{prefix}.{key}" if prefix else str(key), obj[key])
        elif isinstance(obj, float):
            rows.append((prefix, f"{obj:.6f}"))
        else:
            rows.append((prefix, str(obj)))

    walk("", report)
    if not rows:
        return "(empty report)\n"
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"
