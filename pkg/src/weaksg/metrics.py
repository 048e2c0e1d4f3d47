"""Evaluation suite: top-k accuracy (A@k, mA@k) for objects, predicates and
triplets; recall with and without graph constraints (R@k, ng-R@k) and
per-predicate mean recall (mR@k) for SGCls and PredCls; head/body/tail
predicate grouping.

Ranking semantics (pinned by the brute-force oracles in the tests):
  - Triplet candidates are ranked per scene. A candidate is (pair, subject
    class, predicate, object class) with score = node_prob * edge_prob *
    node_prob; the None predicate never enters rankings.
  - The unconstrained list holds every class combination; the constrained list
    keeps only each pair's best candidate (argmax node classes and best
    predicate: exactly the first occurrence of the pair in the ranked
    unconstrained list).
  - Ties break by (pair index, predicate id, subject id, object id).
  - ng-R@k >= R@k holds whenever every pair's best candidate outscores every
    pair's non-best candidate (peaked predictions; the regime this engine
    produces). It is not a theorem for arbitrary probability tables: a pair's
    runner-up predicate can crowd another pair's correct best candidate out of
    the unconstrained top-k while the constrained shortlist keeps it.
  - Predicate A@k / mA@k are computed over edges whose ground-truth predicate
    is not None; None is a training target, not an evaluation category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import EmptyEval
from .scene_model import SceneGraphGT, ordered_pairs


@dataclass(frozen=True)
class PredictionSet:
    """Probabilities the metrics consume; rows must sum to 1 within 1e-5."""

    node_probs: np.ndarray   # K x C_obj
    edge_probs: np.ndarray   # K(K-1) x (C_rel + 1), None class last
    gt: SceneGraphGT

    def __post_init__(self):
        nodes = np.asarray(self.node_probs, dtype=np.float64)
        edges = np.asarray(self.edge_probs, dtype=np.float64)
        k = len(self.gt.node_labels)
        if nodes.shape[0] != k:
            raise ValueError(f"node_probs rows ({nodes.shape[0]}) != K ({k})")
        if edges.shape[0] != k * (k - 1):
            raise ValueError(f"edge_probs rows ({edges.shape[0]}) != K(K-1) ({k * (k - 1)})")
        for arr, what in ((nodes, "node_probs"), (edges, "edge_probs")):
            if arr.size and np.any(arr < 0):
                raise ValueError(f"{what} has negative entries")
            if arr.size and np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-5):
                raise ValueError(f"{what} rows must sum to 1 within 1e-5")
        object.__setattr__(self, "node_probs", nodes)
        object.__setattr__(self, "edge_probs", edges)

    @property
    def num_nodes(self) -> int:
        return len(self.gt.node_labels)


@dataclass(frozen=True)
class PredicateSplit:
    head: frozenset[int]
    body: frozenset[int]
    tail: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "head", frozenset(self.head))
        object.__setattr__(self, "body", frozenset(self.body))
        object.__setattr__(self, "tail", frozenset(self.tail))
        if (self.head & self.body) or (self.head & self.tail) or (self.body & self.tail):
            raise ValueError("split groups must be pairwise disjoint")

    def groups(self) -> dict[str, frozenset[int]]:
        return {"head": self.head, "body": self.body, "tail": self.tail}


def load_predicate_split() -> tuple[list[str], dict[str, list[str]]]:
    """The shipped 26-predicate vocabulary and its head/body/tail grouping."""
    text = resources.files("weaksg.data").joinpath("predicate_split.json").read_text("utf-8")
    data = json.loads(text)
    return data["predicates"], data["groups"]


def split_for_vocab(predicate_vocab: list[str] | tuple[str, ...]) -> PredicateSplit:
    """Map the shipped name groups onto a vocabulary's ids (None entry last)."""
    _, groups = load_predicate_split()
    names = list(predicate_vocab[:-1])
    ids = {g: frozenset(names.index(n) for n in members if n in names)
           for g, members in groups.items()}
    return PredicateSplit(head=ids["head"], body=ids["body"], tail=ids["tail"])


def _ranks(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """0-based rank of each row's true label, ties broken toward lower class id."""
    pt = probs[np.arange(probs.shape[0]), labels]
    greater = (probs > pt[:, None]).sum(axis=1)
    cols = np.arange(probs.shape[1])
    eq_lower = ((probs == pt[:, None]) & (cols[None, :] < labels[:, None])).sum(axis=1)
    return greater + eq_lower


def topk_accuracy(probs: np.ndarray, labels, k: int) -> float:
    """A@k: fraction of rows whose true label ranks within the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise EmptyEval("no ground-truth rows")
    return float((_ranks(p, y) < k).mean())


def per_class_topk_accuracy(probs: np.ndarray, labels, k: int) -> dict[int, float]:
    """A@k per class, over classes with at least one ground-truth row."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise EmptyEval("no ground-truth rows")
    hits = _ranks(p, y) < k
    return {
        int(c): float(hits[y == c].mean())
        for c in sorted(set(y.tolist()))
    }


def mean_topk_accuracy(probs: np.ndarray, labels, k: int) -> float:
    """mA@k: unweighted mean of per-class A@k."""
    per = per_class_topk_accuracy(probs, labels, k)
    return float(np.mean(sorted(per.values()))) if per else 0.0


def triplet_rank(
    node_probs: np.ndarray,
    edge_probs: np.ndarray,
    top_n: int | None = None,
) -> list[tuple[float, int, int, int, int, int, int]]:
    """Ranked unconstrained candidate list for one scene.

    Entries are (score, pair_index, i, j, subject, predicate, object), sorted
    by descending score with the documented tie-break. top_n keeps only each
    pair's best top_n candidates before the global sort; any global top-n
    prefix is unaffected because a pair contributes at most top_n of them.
    """
    nodes = np.asarray(node_probs, dtype=np.float64)
    edges = np.asarray(edge_probs, dtype=np.float64)
    k = nodes.shape[0]
    c_obj = nodes.shape[1]
    n_pred = edges.shape[1] - 1  # None column excluded from ranking
    pairs = ordered_pairs(k)
    rows: list[tuple[float, int, int, int, int, int, int]] = []
    for pair_idx, (i, j) in enumerate(pairs):
        block = (
            nodes[i][:, None, None]
            * edges[pair_idx][None, :n_pred, None]
            * nodes[j][None, None, :]
        )
        flat = block.reshape(-1)
        s_ids, p_ids, o_ids = np.unravel_index(np.arange(flat.size), block.shape)
        tie = (p_ids * c_obj + s_ids) * c_obj + o_ids  # (predicate, subject, object)
        order = np.lexsort((tie, -flat))
        if top_n is not None:
            order = order[:top_n]
        for idx in order:
            rows.append(
                (float(flat[idx]), pair_idx, i, j, int(s_ids[idx]), int(p_ids[idx]), int(o_ids[idx]))
            )
    rows.sort(key=lambda r: (-r[0], r[1], r[5], r[4], r[6]))
    return rows


def constrain_ranked(ranked) -> list:
    """Keep each pair's best candidate (first occurrence in rank order)."""
    seen: set[int] = set()
    out = []
    for row in ranked:
        if row[1] in seen:
            continue
        seen.add(row[1])
        out.append(row)
    return out


def gt_triplets(gt: SceneGraphGT) -> set[tuple[int, int, int, int, int]]:
    """(i, j, subject, predicate, object) for every non-None edge."""
    return {
        (i, j, gt.node_labels[i], p, gt.node_labels[j]) for i, j, p in gt.edge_labels
    }


def recall_at_k(ranked, gt: SceneGraphGT, k: int, mode: str = "unconstrained") -> float:
    """R@k (mode="constrained") or ng-R@k (mode="unconstrained")."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode not in ("constrained", "unconstrained"):
        raise ValueError(f"unknown mode {mode!r}")
    truths = gt_triplets(gt)
    if not truths:
        raise EmptyEval("ground truth has zero relations")
    pool = constrain_ranked(ranked) if mode == "constrained" else ranked
    retrieved = {(r[2], r[3], r[4], r[5], r[6]) for r in pool[:k]}
    return len(truths & retrieved) / len(truths)


def mean_recall_at_k(ranked, gt: SceneGraphGT, k: int, mode: str = "unconstrained") -> float:
    """mR@k: unweighted mean of per-predicate-class recalls over classes in gt."""
    truths = gt_triplets(gt)
    if not truths:
        raise EmptyEval("ground truth has zero relations")
    pool = constrain_ranked(ranked) if mode == "constrained" else ranked
    retrieved = {(r[2], r[3], r[4], r[5], r[6]) for r in pool[:k]}
    per_pred: dict[int, list[bool]] = {}
    for t in sorted(truths):
        per_pred.setdefault(t[3], []).append(t in retrieved)
    recalls = [float(np.mean(v)) for _, v in sorted(per_pred.items())]
    return float(np.mean(recalls))


def predcls_node_probs(gt: SceneGraphGT, num_classes: int) -> np.ndarray:
    """One-hot node probabilities from ground-truth labels (PredCls protocol)."""
    k = len(gt.node_labels)
    out = np.zeros((k, num_classes), dtype=np.float64)
    out[np.arange(k), np.asarray(gt.node_labels, dtype=np.int64)] = 1.0
    return out


def predicate_group_report(
    per_class_scores: dict[int, float], split: PredicateSplit
) -> dict[str, float | None]:
    """Per-group unweighted means; a group with no evaluated class is absent (None)."""
    out: dict[str, float | None] = {}
    for name, ids in split.groups().items():
        vals = [per_class_scores[c] for c in sorted(ids) if c in per_class_scores]
        out[name] = float(np.mean(vals)) if vals else None
    return out


OBJECT_KS = (1, 5, 10)
PREDICATE_KS = (1, 3, 5)
TRIPLET_KS = (50, 100)
RECALL_KS = (20, 50, 100)


def evaluate(
    pred: PredictionSet,
    predicate_vocab: list[str] | tuple[str, ...] | None = None,
) -> dict:
    """The full metric table for one scene.

    SGCls uses predicted node probabilities, PredCls substitutes one-hot
    ground-truth node probabilities. The head/body/tail block appears when the
    vocabulary's names intersect the shipped grouping.
    """
    gt = pred.gt
    k_nodes = pred.num_nodes
    none_id = pred.edge_probs.shape[1] - 1
    table: dict = {"objects": {}, "predicates": {}, "triplets": {}, "sgcls": {}, "predcls": {}}

    node_labels = np.asarray(gt.node_labels, dtype=np.int64)
    for k in OBJECT_KS:
        table["objects"][f"A@{k}"] = topk_accuracy(pred.node_probs, node_labels, k)

    label_map = gt.edge_label_map()
    pairs = ordered_pairs(k_nodes)
    rel_rows = [r for r, pr in enumerate(pairs) if label_map.get(pr, none_id) != none_id]
    rel_labels = np.asarray([label_map[pairs[r]] for r in rel_rows], dtype=np.int64)
    if rel_rows:
        rel_probs = pred.edge_probs[rel_rows]
        per_class_cache: dict[int, dict[int, float]] = {}
        for k in PREDICATE_KS:
            table["predicates"][f"A@{k}"] = topk_accuracy(rel_probs, rel_labels, k)
            per_class_cache[k] = per_class_topk_accuracy(rel_probs, rel_labels, k)
            table["predicates"][f"mA@{k}"] = float(
                np.mean(sorted(per_class_cache[k].values()))
            )

        max_k = max(*TRIPLET_KS, *RECALL_KS)
        ranked = triplet_rank(pred.node_probs, pred.edge_probs, top_n=max_k)
        truths = gt_triplets(gt)
        retrieved_cache = {k: {(r[2], r[3], r[4], r[5], r[6]) for r in ranked[:k]}
                           for k in TRIPLET_KS}
        for k in TRIPLET_KS:
            hits = [t in retrieved_cache[k] for t in sorted(truths)]
            table["triplets"][f"A@{k}"] = float(np.mean(hits))
            per_cat: dict[tuple, list[bool]] = {}
            for t in sorted(truths):
                per_cat.setdefault((t[2], t[3], t[4]), []).append(t in retrieved_cache[k])
            table["triplets"][f"mA@{k}"] = float(
                np.mean([np.mean(v) for _, v in sorted(per_cat.items())])
            )

        predcls_nodes = predcls_node_probs(gt, pred.node_probs.shape[1])
        ranked_pred = triplet_rank(predcls_nodes, pred.edge_probs, top_n=max_k)
        for block, rk in (("sgcls", ranked), ("predcls", ranked_pred)):
            for k in RECALL_KS:
                table[block][f"R@{k}"] = recall_at_k(rk, gt, k, "constrained")
                table[block][f"ng-R@{k}"] = recall_at_k(rk, gt, k, "unconstrained")
                table[block][f"mR@{k}"] = mean_recall_at_k(rk, gt, k, "constrained")

        if predicate_vocab is not None:
            split = split_for_vocab(predicate_vocab)
            groups: dict[str, dict[str, float]] = {}
            for k in PREDICATE_KS:
                report = predicate_group_report(per_class_cache[k], split)
                for g, value in report.items():
                    if value is not None:
                        groups.setdefault(g, {})[f"mA@{k}"] = value
            if groups:
                table["groups"] = groups
    return table
