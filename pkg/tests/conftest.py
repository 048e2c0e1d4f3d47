import numpy as np
import pytest

from weaksg.config import DEFAULT_CONFIG
from weaksg.featurizer import WeightMeta, make_random_weights
from weaksg.harness import SynthConfig, generate_scene

# engine config small enough for fast forward passes; dim must fit the synth
# oracle's basis blocks (2 * object vocab + predicates)
SMALL_CFG = DEFAULT_CONFIG.replace(dim=64, point_encoder_hidden=(16, 32),
                                   edge_head_hidden=64)

SMALL_SYNTH = SynthConfig(
    k_min=4,
    k_max=6,
    object_vocab_size=24,
    dim=64,
    camera_count=4,
    resolution=96,
    points_per_instance=96,
    seed=0,
)


def small_synth(seed: int, **kw) -> SynthConfig:
    fields = SMALL_SYNTH.to_dict()
    fields.update(kw, seed=seed)
    return SynthConfig.from_dict(fields)


@pytest.fixture(scope="session")
def small_cfg():
    return SMALL_CFG


@pytest.fixture(scope="session")
def scene(request):
    """One small generated scene shared across tests."""
    return generate_scene(small_synth(42))


@pytest.fixture(scope="session")
def scene_weights(scene):
    bundle, _, _, _ = scene
    meta = WeightMeta.from_config(
        SMALL_CFG,
        num_object_classes=len(bundle.object_vocab),
        num_predicate_classes=len(bundle.predicate_vocab),
    )
    return make_random_weights(meta, seed=5)


def tiny_meta(dim=16, heads=4, layers=1, c_obj=5, c_rel=4, point_hidden=(8,)):
    return WeightMeta(
        dim=dim,
        layers=layers,
        heads=heads,
        point_hidden=point_hidden,
        edge_hidden=dim,
        num_object_classes=c_obj,
        num_predicate_classes=c_rel,
    )


def rand_state(rng: np.random.Generator, k: int, dim: int):
    """A GraphState-shaped (V, E, edge_index) triple of random features."""
    from weaksg.featurizer import GraphState
    from weaksg.scene_model import ordered_pairs

    pairs = tuple(ordered_pairs(k))
    return GraphState(
        V=rng.standard_normal((k, dim)).astype(np.float32),
        E=rng.standard_normal((len(pairs), dim)).astype(np.float32),
        edge_index=pairs,
    )


def permute_state(state, perm):
    """Relabel nodes so new index a holds old node perm[a]; edge rows follow.

    Keeps the canonical i-major edge ordering, so the result is a valid
    GraphState over the permuted node identities.
    """
    from weaksg.featurizer import GraphState
    from weaksg.scene_model import ordered_pairs

    k = state.num_nodes
    old_row = {pair: r for r, pair in enumerate(state.edge_index)}
    pairs = tuple(ordered_pairs(k))
    e = np.stack([state.E[old_row[(perm[a], perm[b])]] for a, b in pairs]) \
        if pairs else state.E
    return GraphState(V=state.V[list(perm)], E=e, edge_index=pairs,
                      layer=state.layer)
