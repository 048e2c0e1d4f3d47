"""Node pseudo-labels via the Hybrid Matching Strategy and relation
pseudo-labels via prompted triplet embeddings gated by the Mask Filter.

HMS: a rectangular Hungarian solve matches categories one-to-one to instances
on the cosine similarity matrix; when there are more instances than
categories, the leftovers fall back to per-column argmax (Direct matching).
Edges whose candidate set is empty receive the reserved None predicate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import POSITIONAL_PREDICATES
from .errors import MissingEmbedding, ZeroEmbedding
from .projection import ViewSelection
from .scene_model import TripletSet


@dataclass(frozen=True)
class EmbeddingTable:
    """Named vectors of one kind: image, object_text, or triplet_text.

    note records the exporter's crop-vs-frame provenance for image tables.
    """

    kind: str
    dim: int
    normalized: bool
    note: str
    rows: dict[str, np.ndarray]

    KINDS = ("image", "object_text", "triplet_text")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}, got {self.kind!r}")
        cleaned = {}
        for token, vec in self.rows.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dim,):
                raise ValueError(f"token {token!r}: expected dim {self.dim}, got {arr.shape}")
            cleaned[str(token)] = arr
        object.__setattr__(self, "rows", cleaned)
        if self.normalized:
            for token, vec in cleaned.items():
                norm = float(np.linalg.norm(vec.astype(np.float64)))
                if abs(norm - 1.0) > 1e-5:
                    raise ValueError(f"token {token!r} norm {norm} violates normalized flag")

    def vector(self, token: str) -> np.ndarray:
        if token not in self.rows:
            raise MissingEmbedding(f"token {token!r} absent from {self.kind} table")
        return self.rows[token]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Cosine similarities, rows = categories, cols = instances."""

    values: np.ndarray
    categories: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("similarity matrix must be 2-d")
        if vals.shape[0] != len(self.categories):
            raise ValueError("row count must match category count")
        if not np.all(np.isfinite(vals)):
            raise ValueError("similarity entries must be finite")
        if np.any(np.abs(vals) > 1.0 + 1e-6):
            raise ValueError("cosine similarity out of [-1, 1] range")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True)
class NodeAssignment:
    label: int          # index into the similarity matrix's category list
    method: str         # "hungarian" | "direct"
    score: float        # the similarity value backing the choice


@dataclass(frozen=True)
class EdgeAssignment:
    i: int
    j: int
    predicate: str | None  # None means the reserved None class
    score: float | None    # absent when no candidate was scored


@dataclass(frozen=True)
class PseudoLabelAssignment:
    categories: tuple[str, ...]
    nodes: tuple[NodeAssignment, ...]
    edges: tuple[EdgeAssignment, ...]
    edge_source: str = "post_gnn"  # which edge embeddings produced the labels

    def node_names(self) -> list[str]:
        return [self.categories[n.label] for n in self.nodes]


def crop_token(image_id: str, instance_index: int) -> str:
    """Token naming a per-instance crop embedding of one frame."""
    return f"{image_id}#i{instance_index}"


def instance_image_embedding(selection: ViewSelection, images: EmbeddingTable) -> np.ndarray:
    """Mean of the selected views' vectors, L2-renormalized.

    The image table's note field decides whether tokens are whole frames or
    per-instance crops (see docs/FORMATS.md).
    """
    if not selection.picks:
        raise ValueError("selection is empty")
    vecs = []
    for pick in selection.picks:
        token = (
            crop_token(pick.image_id, selection.instance_index)
            if images.note == "crop"
            else pick.image_id
        )
        vecs.append(images.vector(token).astype(np.float64))
    mean = np.mean(vecs, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise ZeroEmbedding("mean of selected view embeddings has zero norm")
    return mean / norm


def whole_scene_embedding(images: EmbeddingTable, frame_tokens: list[str]) -> np.ndarray:
    """Fallback for instances no view sees: unweighted mean of all whole-frame
    embeddings, renormalized."""
    if not frame_tokens:
        raise MissingEmbedding("no frame tokens available for the fallback embedding")
    vecs = [images.vector(t).astype(np.float64) for t in frame_tokens]
    mean = np.mean(vecs, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise ZeroEmbedding("mean of frame embeddings has zero norm")
    return mean / norm


def cosine_similarity_matrix(text: EmbeddingTable, vis: list[np.ndarray]) -> SimilarityMatrix:
    """S[c][k] = cos(text vector of category c, instance vector k).

    Category rows follow the lexicographic order of the table's tokens.
    """
    categories = sorted(text.rows)
    if not categories or not vis:
        raise ValueError("need at least one category and one instance vector")
    tmat = np.stack([text.rows[c].astype(np.float64) for c in categories])
    vmat = np.stack([np.asarray(v, dtype=np.float64) for v in vis])
    if tmat.shape[1] != vmat.shape[1]:
        raise ValueError(f"dimension mismatch: text {tmat.shape[1]} vs visual {vmat.shape[1]}")
    tn = np.linalg.norm(tmat, axis=1)
    vn = np.linalg.norm(vmat, axis=1)
    if np.any(tn == 0.0) or np.any(vn == 0.0):
        raise ZeroEmbedding("zero-norm vector in cosine similarity")
    sims = (tmat @ vmat.T) / np.outer(tn, vn)
    # exact arithmetic can overshoot |1| by an ulp; clip without masking real bugs
    sims = np.clip(sims, -1.0 - 1e-9, 1.0 + 1e-9)
    return SimilarityMatrix(values=sims, categories=tuple(categories))


def hungarian_assign(s: SimilarityMatrix) -> dict[int, int]:
    """Optimal one-to-one category->instance map maximizing total similarity.

    min(C, K) pairs are assigned. The solve is input-deterministic; output
    pairs are reported in row order.
    """
    rows, cols = linear_sum_assignment(-s.values)
    return {int(r): int(c) for r, c in sorted(zip(rows, cols))}


def hybrid_match(s: SimilarityMatrix) -> list[NodeAssignment]:
    """HMS: Hungarian matches first, per-column argmax for leftover instances."""
    c, k = s.values.shape
    assign = hungarian_assign(s)
    by_instance: dict[int, NodeAssignment] = {}
    for cat, inst in assign.items():
        by_instance[inst] = NodeAssignment(
            label=cat, method="hungarian", score=float(s.values[cat, inst])
        )
    for inst in range(k):
        if inst not in by_instance:
            cat = int(np.argmax(s.values[:, inst]))  # argmax ties -> lowest id
            by_instance[inst] = NodeAssignment(
                label=cat, method="direct", score=float(s.values[cat, inst])
            )
    return [by_instance[i] for i in range(k)]


def prompt_triplet(subject: str, predicate: str, obj: str,
                   positional: tuple[str, ...] = POSITIONAL_PREDICATES) -> str:
    """Render the text prompt an offline exporter embeds for one triplet."""
    if not subject or not predicate or not obj:
        raise ValueError("triplet names must be non-empty")
    if predicate in positional:
        return f"there is a {subject} on the {predicate} of {obj}"
    return f"there is a {subject} {predicate} {obj}"


def mask_filter(
    node_labels: list[str],
    triplet_set: TripletSet,
    edge_index: list[tuple[int, int]],
) -> dict[tuple[int, int], list[tuple[str, str, str]]]:
    """Candidates for edge (i, j): triplet entries whose subject category is
    label(i) and object category is label(j). Empty lists are allowed."""
    out: dict[tuple[int, int], list[tuple[str, str, str]]] = {}
    for i, j in edge_index:
        li, lj = node_labels[i], node_labels[j]
        out[(i, j)] = [
            (s, p, o) for s, p, o, _ in triplet_set.entries if s == li and o == lj
        ]
    return out


def relation_pseudo_labels(
    edge_embeddings: np.ndarray,
    triplet_texts: EmbeddingTable,
    candidates: dict[tuple[int, int], list[tuple[str, str, str]]],
    edge_index: list[tuple[int, int]],
    positional: tuple[str, ...] = POSITIONAL_PREDICATES,
    edge_source: str = "post_gnn",
) -> list[EdgeAssignment]:
    """Per edge: the predicate of the argmax-cosine candidate triplet, or None
    when the candidate set is empty. Triplet text vectors are keyed by their
    prompt string."""
    emb = np.asarray(edge_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] != len(edge_index):
        raise ValueError(
            f"edge embeddings must be ({len(edge_index)}, D), got {emb.shape}"
        )
    out: list[EdgeAssignment] = []
    for row, (i, j) in enumerate(edge_index):
        cands = candidates.get((i, j), [])
        if not cands:
            out.append(EdgeAssignment(i=i, j=j, predicate=None, score=None))
            continue
        e = emb[row]
        en = float(np.linalg.norm(e))
        if en == 0.0:
            raise ZeroEmbedding(f"edge ({i},{j}) embedding has zero norm")
        best_score = -np.inf
        best_pred = None
        for s, p, o in cands:  # candidate order is triplet-set order: first wins ties
            t = triplet_texts.vector(prompt_triplet(s, p, o, positional)).astype(np.float64)
            tn = float(np.linalg.norm(t))
            if tn == 0.0:
                raise ZeroEmbedding(f"triplet text for ({s},{p},{o}) has zero norm")
            score = float(e @ t) / (en * tn)
            if score > best_score:
                best_score = score
                best_pred = p
        out.append(EdgeAssignment(i=i, j=j, predicate=best_pred, score=best_score))
    return out
