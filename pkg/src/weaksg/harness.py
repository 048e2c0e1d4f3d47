"""Synthetic scenes with ground truth, oracle embeddings, and the end-to-end
pipeline runner.

The generator places axis-aligned boxes in a square room, samples surface
points, renders exact depth maps by ray casting the boxes, and derives
relations from fixed geometric rules. The rules below are the harness's own
ground truth; nothing upstream defines a generator.

Spatial predicate rules, checked in priority order for each ordered pair
(i, j); the first hit wins, no hit means the None predicate:

  left          x-centre of i is smaller by more than half the summed x extents
  right         mirror of left
  front         same rule on the y axis (smaller y is in front)
  behind        mirror of front
  bigger than   volume of i exceeds twice the volume of j
  smaller than  twice the volume of i is below the volume of j
  higher than   z-centre of i is larger by more than half the summed z extents
  lower than    mirror of higher than
  close by      box gap (Euclidean distance between the two boxes) < 0.5 m;
                symmetric, so it fires for both orderings

Oracle embeddings use disjoint basis blocks of the feature space: object text
vectors are one-hot basis vectors per category; a triplet text vector is the
normalized sum of its subject basis, its object basis shifted by the object
vocabulary size, and its predicate basis shifted by twice that; instance crop
vectors are the category basis plus noise of exactly the configured norm.
Distinct triplets therefore have cosine at most 2/3, which bounds how much
noise matching can tolerate.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import EngineError, BadScene, NoVisibleView, PlacementFailed
from .esagnn import AttentionConfig, forward
from .featurizer import WeightBundle, WeightMeta, initial_embeddings, make_random_weights
from .formats import (
    read_embedding_dir,
    read_scene_bundle,
    read_triplet_set,
    write_embedding_dir,
    write_scene_bundle,
    write_triplet_set,
)
from .losses import LossReport, total_loss
from .metrics import PredictionSet, evaluate
from .projection import ViewSelection, select_top_views
from .pseudolabel import (
    EdgeAssignment,
    EmbeddingTable,
    PseudoLabelAssignment,
    cosine_similarity_matrix,
    crop_token,
    hybrid_match,
    instance_image_embedding,
    mask_filter,
    prompt_triplet,
    relation_pseudo_labels,
    whole_scene_embedding,
)
from .scene_model import (
    SceneBundle,
    SceneGraphGT,
    TripletSet,
    CameraView,
    ordered_pairs,
    validate_scene,
)

RULE_PRIORITY = (
    "left",
    "right",
    "front",
    "behind",
    "bigger than",
    "smaller than",
    "higher than",
    "lower than",
    "close by",
)

CLOSE_BY_GAP = 0.5   # metres
VOLUME_RATIO = 2.0   # "bigger than" threshold

EDGE_SOURCES = ("post_gnn", "initial")


@dataclass(frozen=True)
class SynthConfig:
    """Everything the generator needs; the seed fully determines the output."""

    k_min: int = 4
    k_max: int = 9
    object_vocab_size: int = 40
    predicate_vocab_size: int = 9       # enabled rules, taken in priority order
    room_extent: float = 6.0            # room side length, metres
    point_jitter: float = 0.005         # surface sample noise, metres
    embedding_noise: float = 0.1        # exact norm of crop-embedding noise
    occluder_probability: float = 0.3
    camera_count: int = 6
    resolution: int = 128
    points_per_instance: int = 192
    relation_density: float = 0.65       # chance a fired rule enters the GT
    dim: int = 512
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max):
            raise ValueError(f"bad instance range [{self.k_min}, {self.k_max}]")
        if not (0.0 <= self.relation_density <= 1.0):
            raise ValueError("relation_density must be in [0, 1]")
        if self.object_vocab_size < self.k_max:
            raise ValueError("object vocab must cover the largest scene")
        if not (1 <= self.predicate_vocab_size <= len(RULE_PRIORITY)):
            raise ValueError(
                f"predicate vocab size must be in [1, {len(RULE_PRIORITY)}]"
            )
        for name in ("room_extent", "point_jitter", "embedding_noise",
                     "occluder_probability"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.camera_count < 1 or self.resolution < 8:
            raise ValueError("need at least one camera and 8x8 images")
        if self.points_per_instance < 2:
            raise ValueError("need at least two points per instance")
        # disjoint basis blocks for subject, object, and predicate must fit
        need = 2 * self.object_vocab_size + self.predicate_vocab_size
        if need > self.dim:
            raise ValueError(
                f"dim {self.dim} too small for oracle basis blocks ({need})"
            )

    def to_dict(self) -> dict:
        return {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "object_vocab_size": self.object_vocab_size,
            "predicate_vocab_size": self.predicate_vocab_size,
            "room_extent": self.room_extent,
            "point_jitter": self.point_jitter,
            "embedding_noise": self.embedding_noise,
            "occluder_probability": self.occluder_probability,
            "camera_count": self.camera_count,
            "resolution": self.resolution,
            "points_per_instance": self.points_per_instance,
            "relation_density": self.relation_density,
            "dim": self.dim,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synth config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Box:
    center: np.ndarray  # 3, float64
    extent: np.ndarray  # 3, float64, full side lengths

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.extent / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.extent / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))


def boxes_overlap(a: Box, b: Box, margin: float = 0.05) -> bool:
    return bool(np.all(np.abs(a.center - b.center) < (a.extent + b.extent) / 2 + margin))


def box_gap(a: Box, b: Box) -> float:
    """Euclidean distance between two axis-aligned boxes (0 when touching)."""
    per_axis = np.maximum(
        0.0, np.abs(a.center - b.center) - (a.extent + b.extent) / 2
    )
    return float(np.linalg.norm(per_axis))


def spatial_predicate(a: Box, b: Box, enabled: tuple[str, ...]) -> str | None:
    """First enabled rule that holds for the ordered pair (a, b), else None."""
    half = (a.extent + b.extent) / 2
    checks = {
        "left": b.center[0] - a.center[0] > half[0],
        "right": a.center[0] - b.center[0] > half[0],
        "front": b.center[1] - a.center[1] > half[1],
        "behind": a.center[1] - b.center[1] > half[1],
        "bigger than": a.volume > VOLUME_RATIO * b.volume,
        "smaller than": VOLUME_RATIO * a.volume < b.volume,
        "higher than": a.center[2] - b.center[2] > half[2],
        "lower than": b.center[2] - a.center[2] > half[2],
        "close by": box_gap(a, b) < CLOSE_BY_GAP,
    }
    for name in RULE_PRIORITY:
        if name in enabled and checks[name]:
            return name
    return None


# -------------------------------------------------------------------- geometry

def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera [R|t] rows for a y-down, z-forward pinhole camera."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    t = -rot @ eye
    return np.concatenate([rot, t[:, None]], axis=1)


def _ring_cameras(cfg: SynthConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """(intrinsics, extrinsics) per camera, evenly spaced on a ring."""
    w = cfg.resolution
    f = 0.7 * w
    intr = np.array([[f, 0.0, w / 2.0], [0.0, f, w / 2.0], [0.0, 0.0, 1.0]])
    target = np.array([0.0, 0.0, 0.9])
    out = []
    for i in range(cfg.camera_count):
        theta = 2.0 * math.pi * i / cfg.camera_count
        eye = np.array(
            [
                cfg.room_extent * math.cos(theta),
                cfg.room_extent * math.sin(theta),
                1.5 + 0.4 * (i % 3),
            ]
        )
        out.append((intr, _look_at(eye, target)))
    return out


def render_depth(boxes: list[Box], intr: np.ndarray, extr: np.ndarray,
                 width: int, height: int) -> np.ndarray:
    """Z-buffer of the boxes: per pixel the camera-space depth of the nearest
    box surface along the pixel-centre ray, 0 where no box is hit."""
    rot = extr[:3, :3]
    eye = -rot.T @ extr[:3, 3]
    px, py = np.meshgrid(np.arange(width), np.arange(height))
    dirs_cam = np.stack(
        [
            (px - intr[0, 2]) / intr[0, 0],
            (py - intr[1, 2]) / intr[1, 1],
            np.ones_like(px, dtype=np.float64),
        ],
        axis=-1,
    )
    # rows of rot are the camera axes, so world dirs = R^T d; the ray parameter
    # equals camera-space depth because the camera-z component of d is 1
    dirs = dirs_cam @ rot
    safe = np.where(np.abs(dirs) < 1e-15, 1e-15, dirs)
    depth = np.full((height, width), np.inf)
    for box in boxes:
        t1 = (box.lo - eye) / safe
        t2 = (box.hi - eye) / safe
        enter = np.minimum(t1, t2).max(axis=-1)
        exit_ = np.maximum(t1, t2).min(axis=-1)
        hit = (exit_ >= enter) & (enter > 0)
        depth = np.where(hit & (enter < depth), enter, depth)
    return np.where(np.isfinite(depth), depth, 0.0).astype(np.float32)


def _sample_surface(box: Box, n: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    ex, ey, ez = box.extent
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(size=(n, 3))
    pts = box.lo + u * box.extent
    axis = faces // 2
    side = faces % 2
    rows = np.arange(n)
    pts[rows, axis] = np.where(side == 0, box.lo[axis], box.hi[axis])
    if jitter > 0:
        pts = pts + rng.normal(scale=jitter, size=(n, 3))
    return pts


# ------------------------------------------------------------------- generator

def _object_names(count: int) -> list[str]:
    return [f"obj{idx:03d}" for idx in range(count)]


def _basis(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim)
    v[index] = 1.0
    return v


def _noise(rng: np.random.Generator, dim: int, norm: float) -> np.ndarray:
    if norm == 0.0:
        return np.zeros(dim)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v) * norm


def _normalized(v: np.ndarray) -> np.ndarray:
    return (v / np.linalg.norm(v)).astype(np.float32)


def oracle_triplet_vector(cfg: SynthConfig, subject_id: int, object_id: int,
                          predicate_id: int) -> np.ndarray:
    """Basis-block composition; ids are global vocab / rule-vocab indices."""
    v = (
        _basis(cfg.dim, subject_id)
        + _basis(cfg.dim, cfg.object_vocab_size + object_id)
        + _basis(cfg.dim, 2 * cfg.object_vocab_size + predicate_id)
    )
    return _normalized(v)


def _place_boxes(cfg: SynthConfig, rng: np.random.Generator) -> list[Box] | None:
    k = int(rng.integers(cfg.k_min, cfg.k_max + 1))
    boxes: list[Box] = []
    limit = cfg.room_extent / 2.0 - 0.2
    for _ in range(k):
        for _attempt in range(60):
            extent = rng.uniform([0.3, 0.3, 0.3], [1.0, 1.0, 1.4])
            span = limit - extent[:2] / 2.0
            if np.any(span <= 0):       # box wider than the room
                continue
            cx, cy = rng.uniform(-span, span)
            cz = extent[2] / 2.0
            if rng.uniform() > 0.7:
                cz += rng.uniform(0.4, 1.4)
            box = Box(center=np.array([cx, cy, cz]), extent=extent)
            if not any(boxes_overlap(box, other) for other in boxes):
                boxes.append(box)
                break
        else:
            return None
    return boxes


def _occluder(cfg: SynthConfig, rng: np.random.Generator, boxes: list[Box],
              cameras) -> Box | None:
    if rng.uniform() >= cfg.occluder_probability:
        return None
    target = boxes[int(rng.integers(len(boxes)))]
    intr, extr = cameras[int(rng.integers(len(cameras)))]
    eye = -extr[:3, :3].T @ extr[:3, 3]
    center = (eye + target.center) / 2.0
    toward = target.center - eye
    thin = int(np.argmax(np.abs(toward)))
    extent = np.minimum(target.extent * 1.2, 1.2)
    extent[thin] = 0.05
    return Box(center=center, extent=extent)


def generate_scene(
    cfg: SynthConfig,
) -> tuple[SceneBundle, SceneGraphGT, TripletSet, dict[str, EmbeddingTable]]:
    """Deterministic synthetic scene; raises PlacementFailed when no layout
    with every instance visible is found within the retry budget."""
    rng = np.random.default_rng(cfg.seed)
    vocab = _object_names(cfg.object_vocab_size)
    enabled = RULE_PRIORITY[: cfg.predicate_vocab_size]
    predicate_vocab = tuple(sorted(enabled)) + ("none",)
    cameras = _ring_cameras(cfg)

    for _scene_attempt in range(30):
        boxes = _place_boxes(cfg, rng)
        if boxes is None:
            continue
        k = len(boxes)
        cat_ids = sorted(int(c) for c in rng.choice(
            cfg.object_vocab_size, size=k, replace=False))
        occluder = _occluder(cfg, rng, boxes, cameras)
        render_set = boxes + ([occluder] if occluder is not None else [])

        views = []
        for vi, (intr, extr) in enumerate(cameras):
            depth = render_depth(render_set, intr, extr, cfg.resolution, cfg.resolution)
            views.append(
                CameraView(
                    image_id=f"cam{vi}",
                    width=cfg.resolution,
                    height=cfg.resolution,
                    intrinsics=intr,
                    extrinsics=extr,
                    depth_map=depth,
                )
            )

        chunks = [
            _sample_surface(b, cfg.points_per_instance, cfg.point_jitter, rng)
            for b in boxes
        ]
        points = np.concatenate(chunks).astype(np.float32)
        masks = tuple(
            tuple(range(i * cfg.points_per_instance, (i + 1) * cfg.points_per_instance))
            for i in range(k)
        )

        bundle = SceneBundle(
            name=f"synth-{cfg.seed}",
            points=points,
            masks=masks,
            views=tuple(views),
            object_vocab=tuple(vocab),
            predicate_vocab=predicate_vocab,
        )
        try:
            for i in range(k):
                select_top_views(bundle.instance_points(i), bundle.views,
                                 instance_index=i)
        except NoVisibleView:
            continue

        # disjoint boxes always separate along some axis, so the raw rules
        # relate every pair; thinning leaves genuinely unrelated (None) pairs
        edge_labels = []
        for i, j in ordered_pairs(k):
            name = spatial_predicate(boxes[i], boxes[j], enabled)
            if name is not None and rng.uniform() < cfg.relation_density:
                edge_labels.append((i, j, predicate_vocab.index(name)))
        gt = SceneGraphGT(node_labels=tuple(cat_ids), edge_labels=tuple(edge_labels))

        counts: dict[tuple[str, str, str], int] = {}
        for i, j, p in edge_labels:
            key = (vocab[cat_ids[i]], predicate_vocab[p], vocab[cat_ids[j]])
            counts[key] = counts.get(key, 0) + 1
        triplets = TripletSet(
            entries=tuple((s, p, o, n) for (s, p, o), n in sorted(counts.items()))
        )
        if len(triplets) == 0:
            continue  # a scene with no relations carries no supervision

        tables = _oracle_tables(cfg, rng, bundle, gt)
        return bundle, gt, triplets, tables

    raise PlacementFailed(
        f"no feasible scene for seed {cfg.seed} within 30 attempts"
    )


def _oracle_tables(
    cfg: SynthConfig,
    rng: np.random.Generator,
    bundle: SceneBundle,
    gt: SceneGraphGT,
) -> dict[str, EmbeddingTable]:
    vocab = bundle.object_vocab
    pred_names = bundle.predicate_vocab[:-1]

    object_rows = {
        vocab[c]: _basis(cfg.dim, c).astype(np.float32)
        for c in sorted(set(gt.node_labels))
    }

    image_rows: dict[str, np.ndarray] = {}
    scene_mix = np.zeros(cfg.dim)
    for c in gt.node_labels:
        scene_mix += _basis(cfg.dim, c)
    for view in bundle.views:
        image_rows[view.image_id] = _normalized(
            scene_mix + _noise(rng, cfg.dim, cfg.embedding_noise)
        )
        for inst, c in enumerate(gt.node_labels):
            image_rows[crop_token(view.image_id, inst)] = _normalized(
                _basis(cfg.dim, c) + _noise(rng, cfg.dim, cfg.embedding_noise)
            )

    triplet_rows: dict[str, np.ndarray] = {}
    seen = set()
    for i, j, p in gt.edge_labels:
        s_id, o_id = gt.node_labels[i], gt.node_labels[j]
        key = (s_id, p, o_id)
        if key in seen:
            continue
        seen.add(key)
        prompt = prompt_triplet(vocab[s_id], pred_names[p], vocab[o_id])
        triplet_rows[prompt] = oracle_triplet_vector(cfg, s_id, o_id, p)

    return {
        "image": EmbeddingTable(
            kind="image", dim=cfg.dim, normalized=True, note="crop", rows=image_rows
        ),
        "object_text": EmbeddingTable(
            kind="object_text", dim=cfg.dim, normalized=True, note="",
            rows=object_rows,
        ),
        "triplet_text": EmbeddingTable(
            kind="triplet_text", dim=cfg.dim, normalized=True, note="",
            rows=triplet_rows,
        ),
    }


# -------------------------------------------------------------- scene dir I/O

def write_scene_dir(
    path: str | Path,
    bundle: SceneBundle,
    gt: SceneGraphGT | None,
    triplets: TripletSet,
    tables: dict[str, EmbeddingTable],
) -> None:
    root = Path(path)
    write_scene_bundle(root, bundle, gt)
    write_triplet_set(root / "triplets.json", triplets)
    write_embedding_dir(root / "embeddings", tables)


def read_scene_dir(
    path: str | Path,
) -> tuple[SceneBundle, SceneGraphGT | None, TripletSet, dict[str, EmbeddingTable]]:
    root = Path(path)
    bundle, gt = read_scene_bundle(root)
    triplets = read_triplet_set(root / "triplets.json")
    tables = read_embedding_dir(root / "embeddings")
    return bundle, gt, triplets, tables


def synth_batch(cfg: SynthConfig, count: int, out_dir: str | Path,
                threads: int = 1) -> list[Path]:
    """Generate `count` scenes under out_dir; scene i uses seed cfg.seed + i.

    Thread fan-out never changes the output: every scene derives from its own
    seed and writes to its own directory.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    def one(i: int) -> Path:
        scene_cfg = replace(cfg, seed=cfg.seed + i)
        bundle, gt, triplets, tables = generate_scene(scene_cfg)
        scene_dir = root / f"scene_{i:04d}"
        write_scene_dir(scene_dir, bundle, gt, triplets, tables)
        return scene_dir

    if threads <= 1:
        return [one(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(count)))


# -------------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    report: dict
    selections: list[ViewSelection]          # instances some view sees
    assignment: PseudoLabelAssignment
    node_logits: np.ndarray
    edge_logits: np.ndarray
    node_pl: np.ndarray                      # bundle-vocab ids
    edge_pl: np.ndarray                      # predicate-vocab ids, None class last
    losses: LossReport


@contextmanager
def _stage(name: str):
    """Re-raise engine errors with the failing stage's name prefixed."""
    try:
        yield
    except EngineError as exc:
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc


def _pseudo_accuracies(
    bundle: SceneBundle,
    gt: SceneGraphGT,
    node_names: list[str],
    edges: list[EdgeAssignment],
    edges_unfiltered: list[EdgeAssignment],
) -> dict:
    node_hits = sum(
        1 for k, name in enumerate(node_names)
        if name == bundle.object_vocab[gt.node_labels[k]]
    )
    gt_map = gt.edge_label_map()

    def rel_acc(assigned: list[EdgeAssignment]) -> float | None:
        if not gt_map:
            return None
        hits = 0
        for e in assigned:
            want = gt_map.get((e.i, e.j))
            if want is None:
                continue
            if e.predicate == bundle.predicate_vocab[want]:
                hits += 1
        return hits / len(gt_map)

    out = {"node_accuracy": node_hits / len(node_names)}
    acc = rel_acc(edges)
    if acc is not None:
        out["relation_accuracy"] = acc
        out["relation_accuracy_unfiltered"] = rel_acc(edges_unfiltered)
    return out


def run_pipeline(
    bundle: SceneBundle,
    tables: dict[str, EmbeddingTable],
    triplets: TripletSet,
    weights: WeightBundle,
    cfg: EngineConfig = DEFAULT_CONFIG,
    gt: SceneGraphGT | None = None,
    edge_source: str = "post_gnn",
) -> PipelineResult:
    """Projection, pseudo-labels, forward pass, losses, and (with ground
    truth) the metric table, as one deterministic run."""
    if edge_source not in EDGE_SOURCES:
        raise ValueError(f"edge_source must be one of {EDGE_SOURCES}")
    with _stage("validate"):
        report = validate_scene(bundle)
        if not report.ok:
            raise BadScene("; ".join(report.violations))

    k = bundle.num_instances
    frame_tokens = [v.image_id for v in bundle.views]
    images = tables["image"]

    with _stage("projection"):
        selections: list[ViewSelection | None] = []
        for inst in range(k):
            try:
                selections.append(
                    select_top_views(
                        bundle.instance_points(inst),
                        bundle.views,
                        k=cfg.top_k_views,
                        eps_d=cfg.eps_d,
                        pad=cfg.crop_pad,
                        instance_index=inst,
                    )
                )
            except NoVisibleView:
                selections.append(None)  # falls back to the whole-scene mean

    with _stage("node_pseudo_labels"):
        f_img = [
            whole_scene_embedding(images, frame_tokens)
            if sel is None
            else instance_image_embedding(sel, images)
            for sel in selections
        ]
        sim = cosine_similarity_matrix(tables["object_text"], f_img)
        nodes = hybrid_match(sim)
        node_names = [sim.categories[n.label] for n in nodes]
        node_pl = np.array([bundle.object_vocab.index(n) for n in node_names])

    with _stage("featurizer"):
        state0 = initial_embeddings(bundle, weights, precision=cfg.precision)

    with _stage("gnn"):
        node_logits, edge_logits, state_t = forward(
            state0, weights, AttentionConfig.from_engine(cfg)
        )

    with _stage("relation_pseudo_labels"):
        edge_index = ordered_pairs(k)
        candidates = mask_filter(node_names, triplets, edge_index)
        edge_emb = state_t.E if edge_source == "post_gnn" else state0.E
        edges = relation_pseudo_labels(
            edge_emb, tables["triplet_text"], candidates, edge_index,
            positional=cfg.positional_predicates, edge_source=edge_source,
        )
        all_entries = [(s, p, o) for s, p, o, _ in triplets.entries]
        edges_unfiltered = relation_pseudo_labels(
            edge_emb, tables["triplet_text"],
            {pair: all_entries for pair in edge_index}, edge_index,
            positional=cfg.positional_predicates, edge_source=edge_source,
        )
        name_to_pid = {n: idx for idx, n in enumerate(bundle.predicate_vocab)}
        edge_pl = np.array(
            [
                bundle.none_id if e.predicate is None else name_to_pid[e.predicate]
                for e in edges
            ]
        )
        assignment = PseudoLabelAssignment(
            categories=tuple(sim.categories),
            nodes=tuple(nodes),
            edges=tuple(edges),
            edge_source=edge_source,
        )

    with _stage("losses"):
        losses = total_loss(
            node_logits,
            node_pl,
            edge_logits,
            edge_pl,
            v0=state0.V,
            f_img=np.stack(f_img),
            tau=cfg.tau,
            alpha=cfg.alpha,
        )

    out_report: dict = {
        "format": "pipeline-report/1",
        "scene": bundle.name,
        "num_instances": k,
        "edge_source": edge_source,
        "losses": {
            "l_obj": losses.l_obj,
            "l_rel": losses.l_rel,
            "l_s": losses.l_s,
            "l_total": losses.l_total,
            "alpha": losses.alpha,
            "tau": losses.tau,
        },
    }
    if gt is not None:
        with _stage("metrics"):
            pl = _pseudo_accuracies(bundle, gt, node_names, edges, edges_unfiltered)
            pl["hungarian_nodes"] = sum(1 for n in nodes if n.method == "hungarian")
            pl["direct_nodes"] = sum(1 for n in nodes if n.method == "direct")
            out_report["pseudo_labels"] = pl
            node_probs = _softmax(node_logits)
            edge_probs = _softmax(edge_logits)
            pred = PredictionSet(node_probs=node_probs, edge_probs=edge_probs, gt=gt)
            out_report["metrics"] = evaluate(pred, bundle.predicate_vocab)

    return PipelineResult(
        report=out_report,
        selections=[s for s in selections if s is not None],
        assignment=assignment,
        node_logits=node_logits,
        edge_logits=edge_logits,
        node_pl=node_pl,
        edge_pl=edge_pl,
        losses=losses,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def default_weights_for(bundle: SceneBundle, cfg: EngineConfig, seed: int) -> WeightBundle:
    meta = WeightMeta.from_config(
        cfg,
        num_object_classes=len(bundle.object_vocab),
        num_predicate_classes=len(bundle.predicate_vocab),
    )
    return make_random_weights(meta, seed)


def run_scene_dir(
    path: str | Path,
    weights: WeightBundle | None = None,
    cfg: EngineConfig = DEFAULT_CONFIG,
    seed: int = 0,
    edge_source: str = "post_gnn",
) -> PipelineResult:
    bundle, gt, triplets, tables = read_scene_dir(path)
    if weights is None:
        weights = default_weights_for(bundle, cfg, seed)
    return run_pipeline(bundle, tables, triplets, weights, cfg, gt, edge_source)


def run_batch(
    paths: list[Path],
    cfg: EngineConfig = DEFAULT_CONFIG,
    seed: int = 0,
    edge_source: str = "post_gnn",
    threads: int = 1,
) -> dict:
    """Run every scene directory and aggregate; output is independent of the
    thread count because scenes are independent and results keep path order."""
    def one(p: Path) -> dict:
        return run_scene_dir(p, None, cfg, seed, edge_source).report

    if threads <= 1:
        reports = [one(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, paths))

    agg: dict = {
        "format": "batch-report/1",
        "count": len(reports),
        "scenes": {r["scene"]: r for r in reports},
    }
    keys = ("node_accuracy", "relation_accuracy", "relation_accuracy_unfiltered")
    means = {}
    for key in keys:
        vals = [
            r["pseudo_labels"][key]
            for r in reports
            if "pseudo_labels" in r and key in r["pseudo_labels"]
        ]
        if vals:
            means[key] = float(np.mean(vals))
    if means:
        agg["mean_pseudo_labels"] = means
    return agg
