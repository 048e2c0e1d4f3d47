import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaksg.errors import MissingEmbedding, ZeroEmbedding
from weaksg.projection import ViewPick, ViewSelection
from weaksg.pseudolabel import (
    EmbeddingTable,
    SimilarityMatrix,
    cosine_similarity_matrix,
    crop_token,
    hungarian_assign,
    hybrid_match,
    instance_image_embedding,
    mask_filter,
    prompt_triplet,
    relation_pseudo_labels,
    whole_scene_embedding,
)
from weaksg.scene_model import TripletSet


def brute_force_best_total(values: np.ndarray) -> float:
    """Exhaustive max-total one-to-one assignment of min(C, K) pairs."""
    c, k = values.shape
    best = -np.inf
    if c <= k:
        for cols in itertools.permutations(range(k), c):
            best = max(best, sum(values[r, col] for r, col in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(c), k):
            best = max(best, sum(values[r, col] for col, r in enumerate(rows)))
    return best


def sim(values) -> SimilarityMatrix:
    vals = np.asarray(values, dtype=np.float64)
    return SimilarityMatrix(vals, tuple(f"cat{i}" for i in range(vals.shape[0])))


def test_hungarian_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(60):
        c = int(rng.integers(1, 7))
        k = int(rng.integers(1, 7))
        values = rng.uniform(-1, 1, (c, k))
        assign = hungarian_assign(sim(values))
        assert len(assign) == min(c, k)
        assert len(set(assign.values())) == len(assign)   # one-to-one
        total = sum(values[r, col] for r, col in assign.items())
        assert total == pytest.approx(brute_force_best_total(values), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_hungarian_optimal_property(c, k, seed):
    values = np.random.default_rng(seed).uniform(-1, 1, (c, k))
    assign = hungarian_assign(sim(values))
    total = sum(values[r, col] for r, col in assign.items())
    assert total == pytest.approx(brute_force_best_total(values), abs=1e-12)


def test_hybrid_match_direct_fallback():
    values = np.array([[0.9, 0.2, 0.8], [0.1, 0.7, 0.6]])
    nodes = hybrid_match(sim(values))
    assert [(n.label, n.method) for n in nodes] == [
        (0, "hungarian"), (1, "hungarian"), (0, "direct")]
    assert nodes[0].score == pytest.approx(0.9)
    assert nodes[2].score == pytest.approx(0.8)


def test_hybrid_match_all_hungarian_when_categories_cover():
    values = np.array([[0.9, 0.1], [0.2, 0.8], [0.3, 0.3]])
    nodes = hybrid_match(sim(values))
    assert all(n.method == "hungarian" for n in nodes)
    assert [n.label for n in nodes] == [0, 1]


def test_direct_fallback_tie_prefers_lower_category():
    values = np.array([[0.9, 0.1, 0.5], [0.1, 0.8, 0.5]])
    nodes = hybrid_match(sim(values))
    # leftover instance 2 sees equal scores; argmax picks category 0
    assert (nodes[2].method, nodes[2].label) == ("direct", 0)


def test_hms_recovers_identity_on_clean_similarities():
    rng = np.random.default_rng(1)
    eye = np.eye(5)
    noise = rng.uniform(-0.2, 0.2, (5, 5))
    values = np.clip(0.75 * eye + noise * (1 - eye), -1, 1)
    nodes = hybrid_match(sim(values))
    assert [n.label for n in nodes] == [0, 1, 2, 3, 4]


def test_prompt_strings_frozen():
    assert prompt_triplet("chair", "left", "table") == \
        "there is a chair on the left of table"
    assert prompt_triplet("lamp", "behind", "sofa") == \
        "there is a lamp on the behind of sofa"
    assert prompt_triplet("chair", "close by", "table") == \
        "there is a chair close by table"
    assert prompt_triplet("box", "bigger than", "cup") == \
        "there is a box bigger than cup"
    assert prompt_triplet("a", "left", "b", positional=()) == "there is a a left b"
    with pytest.raises(ValueError):
        prompt_triplet("", "left", "b")


def test_crop_token_frozen():
    assert crop_token("frame_003", 7) == "frame_003#i7"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 5))
def test_mask_filter_candidates_property(seed, k):
    rng = np.random.default_rng(seed)
    cats = [f"c{i}" for i in range(4)]
    entries = []
    for s in cats:
        for o in cats:
            if rng.uniform() < 0.4:
                entries.append((s, f"p{rng.integers(3)}", o, int(rng.integers(1, 4))))
    seen = set()
    entries = [e for e in entries if not (e[:3] in seen or seen.add(e[:3]))]
    if not entries:
        entries = [("c0", "p0", "c1", 1)]
    ts = TripletSet(tuple(entries))
    labels = [cats[rng.integers(4)] for _ in range(k)]
    pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
    cands = mask_filter(labels, ts, pairs)
    assert set(cands) == set(pairs)
    for (i, j), lst in cands.items():
        expect = [(s, p, o) for s, p, o, _ in ts.entries
                  if s == labels[i] and o == labels[j]]
        assert lst == expect  # same contents, triplet-set order


def test_mask_filter_empty_candidate_sets():
    ts = TripletSet((("a", "p", "b", 1),))
    cands = mask_filter(["b", "a"], ts, [(0, 1), (1, 0)])
    assert cands[(0, 1)] == []
    assert cands[(1, 0)] == [("a", "p", "b")]


def triplet_table(vectors: dict[tuple[str, str, str], np.ndarray], dim: int):
    rows = {prompt_triplet(s, p, o): v for (s, p, o), v in vectors.items()}
    return EmbeddingTable("triplet_text", dim, False, "", rows)


def test_relation_labels_match_scalar_cosine_oracle():
    rng = np.random.default_rng(2)
    dim = 8
    cands = {
        (0, 1): [("a", "p0", "b"), ("a", "p1", "b"), ("a", "p2", "b")],
        (1, 0): [("b", "p0", "a")],
        (0, 2): [],
        (2, 0): [("c", "p1", "a")],
    }
    vecs = {t: rng.standard_normal(dim) for lst in cands.values() for t in lst}
    table = triplet_table(vecs, dim)
    pairs = [(0, 1), (1, 0), (0, 2), (2, 0)]
    emb = rng.standard_normal((4, dim))
    out = relation_pseudo_labels(emb, table, cands, pairs)
    for row, (i, j) in enumerate(pairs):
        got = out[row]
        assert (got.i, got.j) == (i, j)
        if not cands[(i, j)]:
            assert got.predicate is None and got.score is None
            continue
        best, best_p = -np.inf, None
        for s, p, o in cands[(i, j)]:
            # the table stores rows as float32; the oracle must round alike
            t = vecs[(s, p, o)].astype(np.float32).astype(np.float64)
            cos = float(emb[row] @ t) / (np.linalg.norm(emb[row]) * np.linalg.norm(t))
            if cos > best:
                best, best_p = cos, p
        assert got.predicate == best_p
        assert got.score == pytest.approx(best, abs=1e-12)


def test_relation_labels_tie_keeps_first_candidate():
    dim = 4
    shared = np.array([1.0, 0.0, 0.0, 0.0])
    cands = {(0, 1): [("a", "p0", "b"), ("a", "p1", "b")]}
    table = triplet_table({("a", "p0", "b"): shared, ("a", "p1", "b"): shared}, dim)
    out = relation_pseudo_labels(shared[None, :], table, cands, [(0, 1)])
    assert out[0].predicate == "p0"


def test_relation_labels_error_paths():
    dim = 4
    table = triplet_table({("a", "p", "b"): np.ones(dim)}, dim)
    cands = {(0, 1): [("a", "p", "b")]}
    with pytest.raises(ValueError):
        relation_pseudo_labels(np.ones((2, dim)), table, cands, [(0, 1)])
    with pytest.raises(ZeroEmbedding):
        relation_pseudo_labels(np.zeros((1, dim)), table, cands, [(0, 1)])
    zero_table = triplet_table({("a", "p", "b"): np.zeros(dim)}, dim)
    with pytest.raises(ZeroEmbedding):
        relation_pseudo_labels(np.ones((1, dim)), zero_table, cands, [(0, 1)])
    empty_table = EmbeddingTable("triplet_text", dim, False, "", {})
    with pytest.raises(MissingEmbedding):
        relation_pseudo_labels(np.ones((1, dim)), empty_table, cands, [(0, 1)])


def test_cosine_matrix_matches_loop_oracle():
    rng = np.random.default_rng(3)
    dim = 6
    rows = {f"name{i}": rng.standard_normal(dim).astype(np.float32) for i in range(4)}
    table = EmbeddingTable("object_text", dim, False, "", rows)
    vis = [rng.standard_normal(dim) for _ in range(3)]
    s = cosine_similarity_matrix(table, vis)
    assert s.categories == tuple(sorted(rows))
    for r, cat in enumerate(s.categories):
        t = rows[cat].astype(np.float64)
        for c, v in enumerate(vis):
            expect = float(t @ v) / (np.linalg.norm(t) * np.linalg.norm(v))
            assert s.values[r, c] == pytest.approx(expect, abs=1e-12)


def test_cosine_matrix_error_paths():
    dim = 4
    table = EmbeddingTable("object_text", dim, False, "", {"a": np.ones(dim)})
    with pytest.raises(ValueError):
        cosine_similarity_matrix(table, [np.ones(3)])
    with pytest.raises(ZeroEmbedding):
        cosine_similarity_matrix(table, [np.zeros(dim)])
    with pytest.raises(ValueError):
        cosine_similarity_matrix(table, [])


def test_cosine_matrix_self_similarity_is_one():
    v = np.array([0.3, -0.4, 0.5, 0.1], dtype=np.float32)
    table = EmbeddingTable("object_text", 4, False, "", {"a": v})
    s = cosine_similarity_matrix(table, [v.astype(np.float64)])
    assert s.values[0, 0] == pytest.approx(1.0, abs=1e-9)


def picks(*view_image_ids):
    return tuple(ViewPick(i, img, 1.0 - 0.1 * i, (0, 0, 4, 4))
                 for i, img in enumerate(view_image_ids))


def test_instance_embedding_crop_tokens_and_mean():
    dim = 4
    rows = {
        crop_token("f0", 2): np.array([1.0, 0, 0, 0], dtype=np.float32),
        crop_token("f1", 2): np.array([0, 1.0, 0, 0], dtype=np.float32),
    }
    table = EmbeddingTable("image", dim, False, "crop", rows)
    sel = ViewSelection(2, picks("f0", "f1"))
    got = instance_image_embedding(sel, table)
    expect = np.array([0.5, 0.5, 0, 0]) / np.linalg.norm([0.5, 0.5, 0, 0])
    assert np.allclose(got, expect, atol=1e-12)


def test_instance_embedding_frame_tokens():
    dim = 3
    rows = {"f0": np.array([0, 0, 2.0], dtype=np.float32)}
    table = EmbeddingTable("image", dim, False, "frame", rows)
    sel = ViewSelection(5, picks("f0"))
    got = instance_image_embedding(sel, table)
    assert np.allclose(got, [0, 0, 1.0])


def test_instance_embedding_errors():
    dim = 3
    table = EmbeddingTable("image", dim, False, "crop",
                           {crop_token("f0", 0): np.array([1.0, 0, 0], dtype=np.float32),
                            crop_token("f1", 0): np.array([-1.0, 0, 0], dtype=np.float32)})
    with pytest.raises(ValueError):
        instance_image_embedding(ViewSelection(0, ()), table)
    with pytest.raises(MissingEmbedding):
        instance_image_embedding(ViewSelection(9, picks("f0")), table)
    with pytest.raises(ZeroEmbedding):
        instance_image_embedding(ViewSelection(0, picks("f0", "f1")), table)


def test_whole_scene_embedding():
    dim = 3
    rows = {"f0": np.array([2.0, 0, 0], dtype=np.float32),
            "f1": np.array([0, 2.0, 0], dtype=np.float32)}
    table = EmbeddingTable("image", dim, False, "frame", rows)
    got = whole_scene_embedding(table, ["f0", "f1"])
    assert np.allclose(got, np.array([1.0, 1.0, 0]) / np.sqrt(2), atol=1e-12)
    with pytest.raises(MissingEmbedding):
        whole_scene_embedding(table, [])


def test_embedding_table_validation():
    with pytest.raises(ValueError):
        EmbeddingTable("video", 3, False, "", {})
    with pytest.raises(ValueError):
        EmbeddingTable("image", 3, False, "", {"a": np.ones(4)})
    with pytest.raises(ValueError):
        EmbeddingTable("image", 3, True, "", {"a": np.full(3, 2.0)})
    ok = EmbeddingTable("image", 3, True, "",
                        {"a": np.array([1.0, 0, 0], dtype=np.float32)})
    assert len(ok) == 1
    with pytest.raises(MissingEmbedding):
        ok.vector("b")


def test_similarity_matrix_validation():
    with pytest.raises(ValueError):
        SimilarityMatrix(np.array([[2.0]]), ("a",))
    with pytest.raises(ValueError):
        SimilarityMatrix(np.array([[np.nan]]), ("a",))
    with pytest.raises(ValueError):
        SimilarityMatrix(np.zeros((2, 2)), ("a",))
