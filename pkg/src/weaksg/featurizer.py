"""Initial node/edge features and the loadable weight bundle.

Node features combine a shared-MLP + max-pool point encoder with a projected
11-value spatial property vector [b, mu, sigma, l, vol]; edge features project
the 11-value descriptor [dmu, dsigma, db, log_l_ratio, vol_ratio]. All
arithmetic runs in 64-bit floats; arrays are stored in 32-bit at module
boundaries unless the caller asks for the f64 storage mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, DEFAULT_EPS_L, DEFAULT_EPS_V, EngineConfig
from .errors import BadWeights, EmptyInstance
from .scene_model import SceneBundle, ordered_pairs

SPATIAL_DIM = 11
EDGE_DESC_DIM = 11
POINT_DIM = 3


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class SpatialProps:
    """Axis-aligned box statistics of one instance point set."""

    b: np.ndarray      # extents, 3
    mu: np.ndarray     # per-axis mean, 3
    sigma: np.ndarray  # per-axis population std, 3
    l: float           # longest side
    vol: float         # product of extents

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.b, self.mu, self.sigma, [self.l], [self.vol]])


@dataclass(frozen=True)
class EdgeDescriptor:
    dmu: np.ndarray
    dsigma: np.ndarray
    db: np.ndarray
    log_l_ratio: float
    vol_ratio: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.dmu, self.dsigma, self.db, [self.log_l_ratio], [self.vol_ratio]]
        )


@dataclass(frozen=True)
class WeightMeta:
    """Architecture hyperparameters that determine the weight inventory."""

    dim: int
    layers: int
    heads: int
    point_hidden: tuple[int, ...]
    edge_hidden: int
    num_object_classes: int
    num_predicate_classes: int  # includes the None class

    def __post_init__(self):
        object.__setattr__(self, "point_hidden", tuple(int(h) for h in self.point_hidden))
        if self.dim % self.heads != 0:
            raise BadWeights(f"heads ({self.heads}) must divide dim ({self.dim})")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @classmethod
    def from_config(cls, cfg: EngineConfig, num_object_classes: int,
                    num_predicate_classes: int) -> "WeightMeta":
        return cls(
            dim=cfg.dim,
            layers=cfg.layers,
            heads=cfg.heads,
            point_hidden=cfg.point_encoder_hidden,
            edge_hidden=cfg.edge_hidden,
            num_object_classes=num_object_classes,
            num_predicate_classes=num_predicate_classes,
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "heads": self.heads,
            "point_hidden": list(self.point_hidden),
            "edge_hidden": self.edge_hidden,
            "num_object_classes": self.num_object_classes,
            "num_predicate_classes": self.num_predicate_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightMeta":
        return cls(
            dim=int(d["dim"]),
            layers=int(d["layers"]),
            heads=int(d["heads"]),
            point_hidden=tuple(d["point_hidden"]),
            edge_hidden=int(d["edge_hidden"]),
            num_object_classes=int(d["num_object_classes"]),
            num_predicate_classes=int(d["num_predicate_classes"]),
        )


def expected_weight_shapes(meta: WeightMeta) -> dict[str, tuple[int, ...]]:
    """The exact record inventory a weight bundle must carry.

    Linear maps follow the x @ W + b convention with W shaped (in, out).
    """
    d = meta.dim
    dk = meta.head_dim
    shapes: dict[str, tuple[int, ...]] = {}
    dims = [POINT_DIM, *meta.point_hidden, d]
    for i, (din, dout) in enumerate(zip(dims, dims[1:])):
        shapes[f"point_encoder.{i}.weight"] = (din, dout)
        shapes[f"point_encoder.{i}.bias"] = (dout,)
    shapes["spatial_proj.weight"] = (SPATIAL_DIM, d)
    shapes["spatial_proj.bias"] = (d,)
    shapes["edge_proj.weight"] = (EDGE_DESC_DIM, d)
    shapes["edge_proj.bias"] = (d,)
    for n in range(meta.layers):
        for name in ("attn_q", "attn_k", "attn_v", "fan_q", "fan_e", "fan_r"):
            shapes[f"layer{n}.{name}.weight"] = (d, d)
            shapes[f"layer{n}.{name}.bias"] = (d,)
        shapes[f"layer{n}.fan_a.weight"] = (2 * dk, dk)
        shapes[f"layer{n}.fan_a.bias"] = (dk,)
        shapes[f"layer{n}.node_update.weight"] = (2 * d, d)
        shapes[f"layer{n}.node_update.bias"] = (d,)
        shapes[f"layer{n}.edge_update.weight"] = (3 * d, d)
        shapes[f"layer{n}.edge_update.bias"] = (d,)
    shapes["node_head.weight"] = (d, meta.num_object_classes)
    shapes["node_head.bias"] = (meta.num_object_classes,)
    shapes["edge_head.0.weight"] = (d, meta.edge_hidden)
    shapes["edge_head.0.bias"] = (meta.edge_hidden,)
    shapes["edge_head.1.weight"] = (meta.edge_hidden, meta.num_predicate_classes)
    shapes["edge_head.1.bias"] = (meta.num_predicate_classes,)
    return shapes


class WeightBundle:
    """Named float32 parameter arrays validated against the meta inventory."""

    def __init__(self, meta: WeightMeta, arrays: dict[str, np.ndarray]):
        expected = expected_weight_shapes(meta)
        missing = sorted(set(expected) - set(arrays))
        unknown = sorted(set(arrays) - set(expected))
        if missing:
            raise BadWeights(f"missing weight records: {missing[:4]}{'...' if len(missing) > 4 else ''}")
        if unknown:
            raise BadWeights(f"unknown weight records: {unknown[:4]}{'...' if len(unknown) > 4 else ''}")
        store: dict[str, np.ndarray] = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float32)
            if arr.shape != shape:
                raise BadWeights(f"record {name}: expected shape {shape}, got {arr.shape}")
            store[name] = arr
        self.meta = meta
        self._arrays = store

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def f64(self, name: str) -> np.ndarray:
        return self._arrays[name].astype(np.float64)

    def names(self) -> list[str]:
        return sorted(self._arrays)

    @property
    def dim(self) -> int:
        return self.meta.dim

    def affine(self, prefix: str, x: np.ndarray) -> np.ndarray:
        return x @ self.f64(f"{prefix}.weight") + self.f64(f"{prefix}.bias")


def engine_config_for(weights: WeightBundle, base: EngineConfig = DEFAULT_CONFIG) -> EngineConfig:
    """Engine config matching a weight file's declared architecture."""
    m = weights.meta
    return base.replace(
        dim=m.dim,
        layers=m.layers,
        heads=m.heads,
        point_encoder_hidden=m.point_hidden,
        edge_head_hidden=m.edge_hidden,
    )


def make_random_weights(meta: WeightMeta, seed: int) -> WeightBundle:
    """Seeded Gaussian init, scale 1/sqrt(fan_in); biases zero. For tests only."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in expected_weight_shapes(meta).items():
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:
            scale = 1.0 / np.sqrt(shape[0])
            arrays[name] = rng.normal(0.0, scale, size=shape).astype(np.float32)
    return WeightBundle(meta, arrays)


def make_zero_weights(meta: WeightMeta) -> WeightBundle:
    arrays = {
        name: np.zeros(shape, dtype=np.float32)
        for name, shape in expected_weight_shapes(meta).items()
    }
    return WeightBundle(meta, arrays)


def node_head_from_embeddings(weights: WeightBundle, vectors: np.ndarray) -> WeightBundle:
    """Replace the node head so logits become plain dot products with the given
    category text embeddings (one column per category), bias zero."""
    if vectors.shape != (weights.meta.dim, weights.meta.num_object_classes):
        raise BadWeights(
            f"node head init expects shape {(weights.meta.dim, weights.meta.num_object_classes)}, "
            f"got {vectors.shape}"
        )
    arrays = {name: weights[name] for name in weights.names()}
    arrays["node_head.weight"] = np.asarray(vectors, dtype=np.float32)
    arrays["node_head.bias"] = np.zeros(weights.meta.num_object_classes, dtype=np.float32)
    return WeightBundle(weights.meta, arrays)


@dataclass(frozen=True)
class GraphState:
    """Node embeddings V (K x D), edge embeddings E over all ordered pairs, and
    the message-passing layer counter."""

    V: np.ndarray
    E: np.ndarray
    edge_index: tuple[tuple[int, int], ...]
    layer: int = 0

    def __post_init__(self):
        k = self.V.shape[0]
        if len(self.edge_index) != self.E.shape[0]:
            raise ValueError("edge_index length must match E rows")
        if set(self.edge_index) != set(ordered_pairs(k)):
            raise ValueError("edge_index must cover exactly all ordered pairs")

    @property
    def num_nodes(self) -> int:
        return self.V.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]


def spatial_props(point_set: np.ndarray) -> SpatialProps:
    """Box extents, per-axis mean and population std, longest side, volume."""
    pts = np.asarray(point_set, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"point set must be Nx3, got {pts.shape}")
    if pts.shape[0] == 0:
        raise EmptyInstance("spatial_props on empty point set")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    b = hi - lo
    mu = pts.mean(axis=0)
    sigma = pts.std(axis=0)  # population std (ddof=0)
    return SpatialProps(b=b, mu=mu, sigma=sigma, l=float(b.max()), vol=float(np.prod(b)))


def edge_descriptor(
    pi: SpatialProps,
    pj: SpatialProps,
    eps_l: float = DEFAULT_EPS_L,
    eps_v: float = DEFAULT_EPS_V,
) -> EdgeDescriptor:
    """Pairwise descriptor; l and vol are clamped below before the ratio/log."""
    li = max(pi.l, eps_l)
    lj = max(pj.l, eps_l)
    vi = max(pi.vol, eps_v)
    vj = max(pj.vol, eps_v)
    return EdgeDescriptor(
        dmu=pi.mu - pj.mu,
        dsigma=pi.sigma - pj.sigma,
        db=pi.b - pj.b,
        log_l_ratio=float(np.log(li / lj)),
        vol_ratio=float(vi / vj),
    )


def encode_point_set(points: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Shared affine+ReLU stack per point, coordinate-wise max-pool over points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise BadWeights(f"point set must be 2-d, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise EmptyInstance("encode_point_set on empty point set")
    if pts.shape[1] != POINT_DIM:
        raise BadWeights(f"points must have {POINT_DIM} columns, got {pts.shape[1]}")
    h = pts
    n_layers = len(weights.meta.point_hidden) + 1
    for i in range(n_layers):
        h = relu(weights.affine(f"point_encoder.{i}", h))
    return h.max(axis=0)


def initial_embeddings(
    scene: SceneBundle, weights: WeightBundle, precision: str = "f32"
) -> GraphState:
    """V0 rows = point encoding + projected spatial vector; E0 rows = projected
    edge descriptors over all ordered pairs (i-major order)."""
    k = scene.num_instances
    d = weights.meta.dim
    props = []
    v0 = np.zeros((k, d), dtype=np.float64)
    for i in range(k):
        pts = scene.instance_points(i)
        sp = spatial_props(pts)
        props.append(sp)
        v0[i] = encode_point_set(pts, weights) + weights.affine("spatial_proj", sp.to_vector())
    pairs = ordered_pairs(k)
    e0 = np.zeros((len(pairs), d), dtype=np.float64)
    for row, (i, j) in enumerate(pairs):
        desc = edge_descriptor(props[i], props[j])
        e0[row] = weights.affine("edge_proj", desc.to_vector())
    store = np.float32 if precision == "f32" else np.float64
    return GraphState(
        V=v0.astype(store), E=e0.astype(store), edge_index=tuple(pairs), layer=0
    )
