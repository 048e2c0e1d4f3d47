"""Weak-supervision engine for 3D scene graph generation.

Projects 3D instances into posed 2D views, matches instances to category
text embeddings (Hungarian plus direct fallback), filters candidate relations
by the resulting node labels, runs an edge-self-attention GNN, and scores
predictions with the scene-graph metric suite.
"""

__version__ = "0.1.0"

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import (
    BadCamera,
    BadFormat,
    BadScene,
    BadTemperature,
    BadWeights,
    EmptyBatch,
    EmptyEval,
    EmptyInstance,
    EmptySupervision,
    EngineError,
    MissingEmbedding,
    NoVisibleView,
    PlacementFailed,
    ZeroEmbedding,
)
from .scene_model import (
    CameraView,
    SceneBundle,
    SceneGraphGT,
    TripletSet,
    derive_object_vocab,
    enumerate_triplet_vocab,
    ordered_pairs,
    validate_scene,
)
from .projection import ViewPick, ViewSelection, project_points, depth_visible, select_top_views
from .featurizer import (
    GraphState,
    WeightBundle,
    WeightMeta,
    engine_config_for,
    initial_embeddings,
    make_random_weights,
    make_zero_weights,
)
from .esagnn import AttentionConfig, edge_self_attention, fan_message, forward, gnn_layer
from .pseudolabel import (
    EmbeddingTable,
    PseudoLabelAssignment,
    cosine_similarity_matrix,
    hungarian_assign,
    hybrid_match,
    mask_filter,
    prompt_triplet,
    relation_pseudo_labels,
)
from .losses import contrastive_loss, cross_entropy, finite_diff_check, total_loss
from .metrics import PredictionSet, evaluate, recall_at_k, topk_accuracy, triplet_rank
from .harness import SynthConfig, generate_scene, run_pipeline, synth_batch

__all__ = [
    "__version__",
    "DEFAULT_CONFIG",
    "EngineConfig",
    "EngineError",
    "BadScene",
    "EmptySupervision",
    "BadCamera",
    "NoVisibleView",
    "EmptyInstance",
    "BadWeights",
    "MissingEmbedding",
    "ZeroEmbedding",
    "BadTemperature",
    "EmptyBatch",
    "EmptyEval",
    "PlacementFailed",
    "BadFormat",
    "CameraView",
    "SceneBundle",
    "SceneGraphGT",
    "TripletSet",
    "derive_object_vocab",
    "enumerate_triplet_vocab",
    "ordered_pairs",
    "validate_scene",
    "ViewPick",
    "ViewSelection",
    "project_points",
    "depth_visible",
    "select_top_views",
    "GraphState",
    "WeightBundle",
    "WeightMeta",
    "engine_config_for",
    "initial_embeddings",
    "make_random_weights",
    "make_zero_weights",
    "AttentionConfig",
    "edge_self_attention",
    "fan_message",
    "forward",
    "gnn_layer",
    "EmbeddingTable",
    "PseudoLabelAssignment",
    "cosine_similarity_matrix",
    "hungarian_assign",
    "hybrid_match",
    "mask_filter",
    "prompt_triplet",
    "relation_pseudo_labels",
    "contrastive_loss",
    "cross_entropy",
    "finite_diff_check",
    "total_loss",
    "PredictionSet",
    "evaluate",
    "recall_at_k",
    "topk_accuracy",
    "triplet_rank",
    "SynthConfig",
    "generate_scene",
    "run_pipeline",
    "synth_batch",
]
