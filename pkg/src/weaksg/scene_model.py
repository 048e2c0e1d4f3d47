"""Core data model: scenes, label spaces, and the triplet supervisory signal.

All types are immutable after construction and safe for concurrent reads.
Ids always refer to the position of a name in its (frozen, ordered) vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupervision


@dataclass(frozen=True)
class CameraView:
    """One calibrated view of the scene.

    intrinsics is 3x3 (pixels, intrinsics[2][2] == 1), extrinsics is a 3x4 or
    4x4 world-to-camera matrix, depth_map is HxW metres with 0 marking invalid
    pixels, image_id names the RGB frame whose embedding lives in an
    EmbeddingTable.
    """

    image_id: str
    width: int
    height: int
    intrinsics: np.ndarray
    extrinsics: np.ndarray
    depth_map: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64))
        ext = np.asarray(self.extrinsics, dtype=np.float64)
        if ext.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"extrinsics must be 3x4 or 4x4, got {ext.shape}")
        object.__setattr__(self, "extrinsics", ext)
        object.__setattr__(self, "depth_map", np.asarray(self.depth_map, dtype=np.float32))
        if self.intrinsics.shape != (3, 3):
            raise ValueError(f"intrinsics must be 3x3, got {self.intrinsics.shape}")


@dataclass(frozen=True)
class SceneBundle:
    """Points, class-agnostic instance masks, views, and label vocabularies.

    predicate_vocab carries a reserved None entry at the last index; the None
    id is therefore len(predicate_vocab) - 1 and is excluded from triplet
    enumeration.
    """

    name: str
    points: np.ndarray                      # N x 3 float32, metres, world frame
    masks: tuple[tuple[int, ...], ...]      # K disjoint index sets into points
    views: tuple[CameraView, ...]
    object_vocab: tuple[str, ...]
    predicate_vocab: tuple[str, ...]        # C_rel names + None entry last

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be Nx3, got {pts.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masks", tuple(tuple(int(i) for i in m) for m in self.masks))
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "object_vocab", tuple(self.object_vocab))
        object.__setattr__(self, "predicate_vocab", tuple(self.predicate_vocab))

    @property
    def num_instances(self) -> int:
        return len(self.masks)

    @property
    def none_id(self) -> int:
        return len(self.predicate_vocab) - 1

    @property
    def none_name(self) -> str:
        return self.predicate_vocab[-1]

    def instance_points(self, k: int) -> np.ndarray:
        return self.points[np.asarray(self.masks[k], dtype=np.int64)]


@dataclass(frozen=True)
class TripletSet:
    """The weak supervisory signal: triplet categories with occurrence counts."""

    entries: tuple[tuple[str, str, str, int], ...]  # (subject, predicate, object, count)

    def __post_init__(self):
        object.__setattr__(
            self,
            "entries",
            tuple((str(s), str(p), str(o), int(n)) for s, p, o, n in self.entries),
        )
        for s, p, o, n in self.entries:
            if n < 1:
                raise ValueError(f"triplet count must be >= 1, got {n} for ({s},{p},{o})")
        keys = [(s, p, o) for s, p, o, _ in self.entries]
        if len(keys) != len(set(keys)):
            raise ValueError("duplicate triplet entries")

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[tuple[str, str, str], int]:
        return {(s, p, o): n for s, p, o, n in self.entries}


@dataclass(frozen=True)
class SceneGraphGT:
    """Ground-truth labels, used only by the synthetic harness and metrics.

    edge_labels maps ordered pairs (i, j), i != j, to a predicate id; pairs
    absent from the map carry the None predicate.
    """

    node_labels: tuple[int, ...]
    edge_labels: tuple[tuple[int, int, int], ...]  # (i, j, predicate_id)

    def __post_init__(self):
        object.__setattr__(self, "node_labels", tuple(int(x) for x in self.node_labels))
        object.__setattr__(
            self, "edge_labels", tuple((int(i), int(j), int(p)) for i, j, p in self.edge_labels)
        )
        k = len(self.node_labels)
        seen = set()
        for i, j, _ in self.edge_labels:
            if i == j:
                raise ValueError(f"self-edge ({i},{i}) not allowed")
            if not (0 <= i < k and 0 <= j < k):
                raise ValueError(f"edge ({i},{j}) out of range for K={k}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))

    def edge_label_map(self) -> dict[tuple[int, int], int]:
        return {(i, j): p for i, j, p in self.edge_labels}


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_scene: one message per violated invariant."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def ordered_pairs(k: int) -> list[tuple[int, int]]:
    """Canonical enumeration of all ordered instance pairs (i-major)."""
    return [(i, j) for i in range(k) for j in range(k) if i != j]


def validate_scene(bundle: SceneBundle) -> ValidationReport:
    """Check every structural invariant; never aborts, lists all violations."""
    out: list[str] = []
    n = bundle.points.shape[0]
    seen: set[int] = set()
    for k, mask in enumerate(bundle.masks):
        if len(mask) == 0:
            out.append(f"mask {k} empty")
        idx = set(mask)
        if len(idx) != len(mask):
            out.append(f"mask {k} has repeated indices")
        if any(i < 0 or i >= n for i in idx):
            out.append(f"mask {k} index out of range")
        if idx & seen:
            out.append(f"masks not disjoint at mask {k}")
        seen |= idx
    if len(set(bundle.object_vocab)) != len(bundle.object_vocab):
        out.append("object vocab names not unique")
    if len(set(bundle.predicate_vocab)) != len(bundle.predicate_vocab):
        out.append("predicate vocab names not unique")
    if len(bundle.predicate_vocab) < 1:
        out.append("predicate vocab missing the None entry")
    for vi, view in enumerate(bundle.views):
        if abs(view.intrinsics[2][2] - 1.0) > 1e-12:
            out.append(f"view {vi} intrinsics[2][2] != 1")
        if view.depth_map.shape != (view.height, view.width):
            out.append(f"view {vi} depth map shape mismatch")
        elif np.any(view.depth_map < 0):
            out.append(f"view {vi} has negative depth values")
    return ValidationReport(tuple(out))


def derive_object_vocab(triplets: TripletSet) -> list[str]:
    """L^O: sorted unique subject/object categories of the triplet set."""
    if len(triplets) == 0:
        raise EmptySupervision("triplet set has no entries")
    names = {s for s, _, _, _ in triplets.entries} | {o for _, _, o, _ in triplets.entries}
    return sorted(names)


def enumerate_triplet_vocab(
    object_vocab: tuple[str, ...] | list[str],
    predicate_vocab: tuple[str, ...] | list[str],
) -> list[tuple[str, str, str]]:
    """All C_obj * C_rel * C_obj triplet categories, subject-major order.

    predicate_vocab is the full stored vocabulary; its last entry is the
    reserved None predicate and is excluded here.
    """
    if not object_vocab or not predicate_vocab:
        raise ValueError("vocabularies must be non-empty")
    preds = list(predicate_vocab[:-1])
    return [(s, p, o) for s in object_vocab for p in preds for o in object_vocab]


def triplet_vocab_index(
    object_vocab, predicate_vocab, subject: str, predicate: str, obj: str
) -> int:
    """Position of a triplet category in enumerate_triplet_vocab's output."""
    c_obj = len(object_vocab)
    c_rel = len(predicate_vocab) - 1
    s = list(object_vocab).index(subject)
    p = list(predicate_vocab[:-1]).index(predicate)
    o = list(object_vocab).index(obj)
    return (s * c_rel + p) * c_obj + o
