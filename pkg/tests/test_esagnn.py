import numpy as np
import pytest

from conftest import permute_state, rand_state, tiny_meta
from weaksg.errors import BadWeights
from weaksg.esagnn import (
    AttentionConfig,
    classifier_heads,
    edge_self_attention,
    fan_message,
    forward,
    gnn_layer,
)
from weaksg.featurizer import (
    GraphState,
    WeightBundle,
    expected_weight_shapes,
    make_random_weights,
    relu,
)

META = tiny_meta(dim=16, heads=4, layers=2)
CFG = AttentionConfig(heads=4, dim=16, layers=2)


def softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def oracle_attention(E, w, cfg, layer):
    """Per-head loop re-statement of multi-head edge self-attention."""
    e = np.asarray(E, dtype=np.float64)
    m, d = e.shape
    dk = cfg.head_dim
    q = e @ w.f64(f"layer{layer}.attn_q.weight") + w.f64(f"layer{layer}.attn_q.bias")
    k = e @ w.f64(f"layer{layer}.attn_k.weight") + w.f64(f"layer{layer}.attn_k.bias")
    v = e @ w.f64(f"layer{layer}.attn_v.weight") + w.f64(f"layer{layer}.attn_v.bias")
    out = np.zeros((m, d))
    for h in range(cfg.heads):
        sl = slice(h * dk, (h + 1) * dk)
        qh, kh, vh = q[:, sl], k[:, sl], v[:, sl]
        for row in range(m):
            scores = np.array([qh[row] @ kh[col] / np.sqrt(dk) for col in range(m)])
            out[row, sl] = softmax(scores) @ vh
    return out


def oracle_fan(vi, e, vj, w, cfg, layer):
    """Single-triple FAN message, one head at a time."""
    dk = cfg.head_dim
    q = vi @ w.f64(f"layer{layer}.fan_q.weight") + w.f64(f"layer{layer}.fan_q.bias")
    eh = e @ w.f64(f"layer{layer}.fan_e.weight") + w.f64(f"layer{layer}.fan_e.bias")
    r = vj @ w.f64(f"layer{layer}.fan_r.weight") + w.f64(f"layer{layer}.fan_r.bias")
    out = np.zeros(cfg.dim)
    wa = w.f64(f"layer{layer}.fan_a.weight")
    ba = w.f64(f"layer{layer}.fan_a.bias")
    for h in range(cfg.heads):
        sl = slice(h * dk, (h + 1) * dk)
        scores = np.concatenate([q[sl], eh[sl]]) @ wa + ba
        out[sl] = softmax(scores) * r[sl]
    return out


def test_attention_matches_loop_oracle():
    rng = np.random.default_rng(1)
    w = make_random_weights(META, seed=2)
    e = rng.standard_normal((7, 16))
    got = edge_self_attention(e, w, CFG, layer=1)
    expect = oracle_attention(e, w, CFG, layer=1)
    assert np.allclose(got, expect, atol=1e-12)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(2)
    w = make_random_weights(META, seed=2)
    e = rng.standard_normal((9, 16)) * 4
    out, attn = edge_self_attention(e, w, CFG, layer=0, return_attention=True)
    assert attn.shape == (4, 9, 9)
    assert np.allclose(attn.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(attn >= 0)
    assert out.shape == (9, 16)


def test_attention_residual_flag():
    rng = np.random.default_rng(3)
    w = make_random_weights(META, seed=2)
    e = rng.standard_normal((4, 16))
    plain = edge_self_attention(e, w, CFG, layer=0)
    res_cfg = AttentionConfig(heads=4, dim=16, layers=2, residual=True)
    with_res = edge_self_attention(e, w, res_cfg, layer=0)
    assert np.allclose(with_res, plain + e, atol=1e-12)


def test_attention_rejects_bad_width_and_empty():
    w = make_random_weights(META, seed=2)
    with pytest.raises(BadWeights):
        edge_self_attention(np.zeros((3, 8)), w, CFG)
    with pytest.raises(ValueError):
        edge_self_attention(np.zeros((0, 16)), w, CFG)


def test_fan_matches_loop_oracle():
    rng = np.random.default_rng(4)
    w = make_random_weights(META, seed=5)
    vi, e, vj = rng.standard_normal((3, 16))
    got = fan_message(vi, e, vj, w, CFG, layer=0)
    assert got.shape == (16,)
    assert np.allclose(got, oracle_fan(vi, e, vj, w, CFG, layer=0), atol=1e-12)


def test_fan_batched_matches_single():
    rng = np.random.default_rng(5)
    w = make_random_weights(META, seed=5)
    vi = rng.standard_normal((6, 16))
    e = rng.standard_normal((6, 16))
    vj = rng.standard_normal((6, 16))
    batch = fan_message(vi, e, vj, w, CFG, layer=1)
    for row in range(6):
        single = fan_message(vi[row], e[row], vj[row], w, CFG, layer=1)
        assert np.allclose(batch[row], single, atol=1e-13)


def test_fan_zero_scorer_gates_uniformly():
    # g_a == 0 makes the feature attention uniform: message = g_r(v_j) / d_k
    shapes = expected_weight_shapes(META)
    arrays = {n: np.zeros(s, dtype=np.float32) for n, s in shapes.items()}
    d = META.dim
    arrays["layer0.fan_r.weight"] = np.eye(d, dtype=np.float32)
    w_id = WeightBundle(META, arrays)
    rng = np.random.default_rng(6)
    vi, e, vj = rng.standard_normal((3, 16))
    msg = fan_message(vi, e, vj, w_id, CFG, layer=0)
    assert np.allclose(msg, vj / CFG.head_dim, atol=1e-12)


def test_gnn_layer_matches_loop_oracle():
    rng = np.random.default_rng(7)
    w = make_random_weights(META, seed=8)
    state = rand_state(rng, k=4, dim=16)
    out = gnn_layer(state, w, CFG)
    assert out.layer == 1
    assert out.V.dtype == np.float32

    v = state.V.astype(np.float64)
    e_att = oracle_attention(state.E, w, CFG, layer=0)
    agg = np.zeros((4, 16))
    for i in range(4):
        msgs = [oracle_fan(v[a], e_att[r], v[b], w, CFG, layer=0)
                for r, (a, b) in enumerate(state.edge_index) if a == i]
        agg[i] = np.max(msgs, axis=0)
    wn = w.f64("layer0.node_update.weight")
    bn = w.f64("layer0.node_update.bias")
    v_expect = relu(np.concatenate([v, agg], axis=1) @ wn + bn)
    assert np.allclose(out.V, v_expect.astype(np.float32), atol=1e-6)

    we = w.f64("layer0.edge_update.weight")
    be = w.f64("layer0.edge_update.bias")
    for r, (a, b) in enumerate(state.edge_index):
        row = relu(np.concatenate([v[a], e_att[r], v[b]]) @ we + be)
        assert np.allclose(out.E[r], row.astype(np.float32), atol=1e-6)


def test_single_node_aggregates_zero():
    w = make_random_weights(META, seed=9)
    state = GraphState(V=np.ones((1, 16), dtype=np.float32),
                       E=np.zeros((0, 16), dtype=np.float32), edge_index=())
    out = gnn_layer(state, w, CFG)
    v = state.V.astype(np.float64)
    expect = relu(np.concatenate([v, np.zeros((1, 16))], axis=1)
                  @ w.f64("layer0.node_update.weight")
                  + w.f64("layer0.node_update.bias"))
    assert np.allclose(out.V, expect.astype(np.float32))
    assert out.E.shape == (0, 16)
    node_logits, edge_logits = classifier_heads(out, w)
    assert node_logits.shape == (1, META.num_object_classes)
    assert edge_logits.shape == (0, META.num_predicate_classes)


def test_forward_layer_count_and_t0_hook():
    rng = np.random.default_rng(10)
    state = rand_state(rng, k=3, dim=16)

    meta0 = tiny_meta(dim=16, heads=4, layers=0)
    w0 = make_random_weights(meta0, seed=11)
    cfg0 = AttentionConfig(heads=4, dim=16, layers=0)
    node_logits, edge_logits, final = forward(state, w0, cfg0)
    # T = 0 isolates the heads: logits depend only on the initial features
    expect_nodes, expect_edges = classifier_heads(state, w0)
    assert np.array_equal(node_logits, expect_nodes)
    assert np.array_equal(edge_logits, expect_edges)
    assert final is state

    w2 = make_random_weights(META, seed=11)
    _, _, out2 = forward(state, w2, CFG)
    assert out2.layer == 2


def test_forward_rejects_mismatched_config():
    rng = np.random.default_rng(12)
    state = rand_state(rng, k=3, dim=16)
    w = make_random_weights(META, seed=13)
    with pytest.raises(BadWeights):
        forward(state, w, AttentionConfig(heads=4, dim=16, layers=1))
    meta32 = tiny_meta(dim=32, heads=4, layers=2)
    with pytest.raises(BadWeights):
        forward(state, make_random_weights(meta32, 0),
                AttentionConfig(heads=4, dim=32, layers=2))


def test_forward_is_deterministic():
    rng = np.random.default_rng(14)
    state = rand_state(rng, k=5, dim=16)
    w = make_random_weights(META, seed=15)
    n1, e1, s1 = forward(state, w, CFG)
    n2, e2, s2 = forward(state, w, CFG)
    assert np.array_equal(n1, n2) and np.array_equal(e1, e2)
    assert np.array_equal(s1.V, s2.V) and np.array_equal(s1.E, s2.E)


def test_forward_permutation_equivariance():
    rng = np.random.default_rng(16)
    w = make_random_weights(META, seed=17)
    for trial in range(5):
        k = int(rng.integers(2, 7))
        state = rand_state(rng, k, 16)
        perm = tuple(rng.permutation(k).tolist())
        n_base, e_base, _ = forward(state, w, CFG)
        n_perm, e_perm, _ = forward(permute_state(state, perm), w, CFG)
        assert np.allclose(n_perm, n_base[list(perm)], atol=1e-5)
        from weaksg.scene_model import ordered_pairs
        base_row = {p: r for r, p in enumerate(ordered_pairs(k))}
        for r, (a, b) in enumerate(ordered_pairs(k)):
            assert np.allclose(e_perm[r], e_base[base_row[(perm[a], perm[b])]],
                               atol=1e-5)


def test_precision_modes():
    rng = np.random.default_rng(18)
    state = rand_state(rng, k=3, dim=16)
    w = make_random_weights(META, seed=19)
    out32 = gnn_layer(state, w, CFG)
    assert out32.V.dtype == np.float32 and out32.E.dtype == np.float32
    cfg64 = AttentionConfig(heads=4, dim=16, layers=2, precision="f64")
    out64 = gnn_layer(state, w, cfg64)
    assert out64.V.dtype == np.float64 and out64.E.dtype == np.float64
    # same math, different storage rounding
    assert np.allclose(out32.V, out64.V, atol=1e-5)


def test_attention_config_validation():
    with pytest.raises(ValueError):
        AttentionConfig(heads=3, dim=16, layers=1)
    with pytest.raises(ValueError):
        AttentionConfig(heads=4, dim=16, layers=-1)
    with pytest.raises(ValueError):
        AttentionConfig(heads=4, dim=16, layers=1, precision="f16")
    assert AttentionConfig(heads=4, dim=16, layers=0).head_dim == 4
