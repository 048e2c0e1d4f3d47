"""Deterministic forward pass of the edge-self-attention GNN.

Per layer: the full edge set passes through multi-head scaled dot-product
self-attention (every edge is a token), then each node aggregates feature-wise
attention (FAN) messages from all other nodes by a coordinate-wise max, and
node/edge embeddings are updated by affine+ReLU maps. The attention-updated
edges feed both the node update and the edge update. Finally an affine node
head and a two-layer edge head (None class included) produce logits.

All accumulation is in 64-bit floats; between layers arrays are stored at the
configured precision (f32 by default) so file-loaded and in-memory runs agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .errors import BadWeights
from .featurizer import GraphState, WeightBundle, relu


@dataclass(frozen=True)
class AttentionConfig:
    """Head count, per-head width, layer count, and numeric storage mode."""

    heads: int
    dim: int
    layers: int
    residual: bool = False
    precision: str = "f32"  # storage between layers: f32 | f64

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be 'f32' or 'f64'")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @classmethod
    def from_engine(cls, cfg: EngineConfig) -> "AttentionConfig":
        return cls(
            heads=cfg.heads,
            dim=cfg.dim,
            layers=cfg.layers,
            residual=cfg.residual_attention,
            precision=cfg.precision,
        )


def _check_dim(arr: np.ndarray, dim: int, what: str) -> None:
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise BadWeights(f"{what} must be (*, {dim}), got {arr.shape}")


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def edge_self_attention(
    E: np.ndarray,
    weights: WeightBundle,
    config: AttentionConfig,
    layer: int = 0,
    return_attention: bool = False,
):
    """Multi-head self-attention over the whole edge set.

    Heads are contiguous d_k slices of the q/k/v projections; outputs are the
    per-head attention-weighted values concatenated back to width D. No output
    projection and, unless config.residual, no residual add.
    """
    e = np.asarray(E, dtype=np.float64)
    _check_dim(e, config.dim, "edge embeddings")
    m = e.shape[0]
    if m < 1:
        raise ValueError("edge_self_attention requires at least one edge")
    h, dk = config.heads, config.head_dim
    prefix = f"layer{layer}"
    q = weights.affine(f"{prefix}.attn_q", e).reshape(m, h, dk)
    k = weights.affine(f"{prefix}.attn_k", e).reshape(m, h, dk)
    v = weights.affine(f"{prefix}.attn_v", e).reshape(m, h, dk)
    # scores[head] = Q_h K_h^T / sqrt(d_k), softmax over key tokens
    scores = np.einsum("mhd,nhd->hmn", q, k) / np.sqrt(dk)
    attn = _softmax_rows(scores)
    out = np.einsum("hmn,nhd->mhd", attn, v).reshape(m, h * dk)
    if config.residual:
        out = out + e
    if return_attention:
        return out, attn
    return out


def fan_message(
    v_i: np.ndarray,
    e_ij: np.ndarray,
    v_j: np.ndarray,
    weights: WeightBundle,
    config: AttentionConfig,
    layer: int = 0,
) -> np.ndarray:
    """FAN message for one or more (source, edge, target) triples.

    Per head: the head slices of g_q(v_i) and g_e(e_ij) are concatenated,
    mapped through g_a to d_k scores, softmaxed over the d_k feature positions,
    and gate g_r(v_j)'s head slice elementwise; head chunks concatenate to D.
    """
    vi = np.atleast_2d(np.asarray(v_i, dtype=np.float64))
    ej = np.atleast_2d(np.asarray(e_ij, dtype=np.float64))
    vj = np.atleast_2d(np.asarray(v_j, dtype=np.float64))
    for arr, what in ((vi, "v_i"), (ej, "e_ij"), (vj, "v_j")):
        _check_dim(arr, config.dim, what)
    b = vi.shape[0]
    h, dk = config.heads, config.head_dim
    prefix = f"layer{layer}"
    q = weights.affine(f"{prefix}.fan_q", vi).reshape(b, h, dk)
    e = weights.affine(f"{prefix}.fan_e", ej).reshape(b, h, dk)
    r = weights.affine(f"{prefix}.fan_r", vj).reshape(b, h, dk)
    qe = np.concatenate([q, e], axis=2)  # b x h x 2dk, shared g_a across heads
    a = _softmax_rows(qe @ weights.f64(f"{prefix}.fan_a.weight")
                      + weights.f64(f"{prefix}.fan_a.bias"))
    msg = (a * r).reshape(b, h * dk)
    return msg[0] if np.asarray(v_i).ndim == 1 else msg


def gnn_layer(state: GraphState, weights: WeightBundle, config: AttentionConfig) -> GraphState:
    """One message-passing layer over the complete digraph.

    The empty neighborhood at K=1 aggregates to the zero vector.
    """
    v = np.asarray(state.V, dtype=np.float64)
    k, d = v.shape
    n = state.layer
    if state.E.shape[0] > 0:
        e_att = edge_self_attention(state.E, weights, config, layer=n)
    else:
        e_att = np.zeros((0, d), dtype=np.float64)

    agg = np.zeros((k, d), dtype=np.float64)
    if state.E.shape[0] > 0:
        src = np.fromiter((i for i, _ in state.edge_index), dtype=np.int64)
        dst = np.fromiter((j for _, j in state.edge_index), dtype=np.int64)
        msgs = fan_message(v[src], e_att, v[dst], weights, config, layer=n)
        # edge_index is i-major, so rows group by source node contiguously
        for i in range(k):
            rows = msgs[src == i]
            if rows.shape[0]:
                agg[i] = rows.max(axis=0)

    prefix = f"layer{n}"
    v_new = relu(weights.affine(f"{prefix}.node_update", np.concatenate([v, agg], axis=1)))
    if state.E.shape[0] > 0:
        src = np.fromiter((i for i, _ in state.edge_index), dtype=np.int64)
        dst = np.fromiter((j for _, j in state.edge_index), dtype=np.int64)
        e_new = relu(
            weights.affine(
                f"{prefix}.edge_update", np.concatenate([v[src], e_att, v[dst]], axis=1)
            )
        )
    else:
        e_new = np.zeros((0, d), dtype=np.float64)

    store = np.float32 if config.precision == "f32" else np.float64
    return GraphState(
        V=v_new.astype(store),
        E=e_new.astype(store),
        edge_index=state.edge_index,
        layer=n + 1,
    )


def classifier_heads(
    state: GraphState, weights: WeightBundle
) -> tuple[np.ndarray, np.ndarray]:
    """Affine node head; two-layer (affine+ReLU, affine) edge head."""
    v = np.asarray(state.V, dtype=np.float64)
    e = np.asarray(state.E, dtype=np.float64)
    node_logits = weights.affine("node_head", v)
    if e.shape[0] > 0:
        hidden = relu(weights.affine("edge_head.0", e))
        edge_logits = weights.affine("edge_head.1", hidden)
    else:
        edge_logits = np.zeros((0, weights.meta.num_predicate_classes), dtype=np.float64)
    return node_logits, edge_logits


def forward(
    scene_features: GraphState, weights: WeightBundle, config: AttentionConfig
) -> tuple[np.ndarray, np.ndarray, GraphState]:
    """Apply config.layers gnn_layer steps, then the classifier heads.

    config.layers = 0 is the classifier-isolation test hook: logits then
    depend only on the initial features.
    """
    if config.layers != weights.meta.layers:
        raise BadWeights(
            f"config layers ({config.layers}) != weight bundle layers ({weights.meta.layers})"
        )
    if config.dim != weights.meta.dim:
        raise BadWeights(f"config dim ({config.dim}) != weight dim ({weights.meta.dim})")
    state = scene_features
    for _ in range(config.layers):
        state = gnn_layer(state, weights, config)
    node_logits, edge_logits = classifier_heads(state, weights)
    return node_logits, edge_logits, state
