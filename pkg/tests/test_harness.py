from pathlib import Path

import numpy as np
import pytest

from conftest import SMALL_CFG, small_synth
from weaksg.config import DEFAULT_CONFIG
from weaksg.errors import EngineError, PlacementFailed
from weaksg.harness import (
    CLOSE_BY_GAP,
    EDGE_SOURCES,
    RULE_PRIORITY,
    VOLUME_RATIO,
    Box,
    SynthConfig,
    box_gap,
    boxes_overlap,
    default_weights_for,
    generate_scene,
    oracle_triplet_vector,
    read_scene_dir,
    render_depth,
    run_batch,
    run_pipeline,
    run_scene_dir,
    spatial_predicate,
    synth_batch,
    write_scene_dir,
)
from weaksg.scene_model import validate_scene

ALL = RULE_PRIORITY


def box(cx, cy, cz, ex=1.0, ey=1.0, ez=1.0):
    return Box(np.array([cx, cy, cz], dtype=np.float64),
               np.array([ex, ey, ez], dtype=np.float64))


def test_rule_priority_is_frozen():
    assert RULE_PRIORITY == ("left", "right", "front", "behind", "bigger than",
                             "smaller than", "higher than", "lower than",
                             "close by")
    assert CLOSE_BY_GAP == 0.5 and VOLUME_RATIO == 2.0
    assert EDGE_SOURCES == ("post_gnn", "initial")


def test_axis_separation_rules():
    a, b = box(0, 0, 0), box(2, 0, 0)
    assert spatial_predicate(a, b, ALL) == "left"
    assert spatial_predicate(b, a, ALL) == "right"
    c = box(0, 2, 0)
    assert spatial_predicate(a, c, ALL) == "front"
    assert spatial_predicate(c, a, ALL) == "behind"
    d = box(0, 0, 2)
    assert spatial_predicate(d, a, ALL) == "higher than"
    assert spatial_predicate(a, d, ALL) == "lower than"


def test_rule_priority_order():
    # separated along x and y: left beats front
    a, b = box(0, 0, 0), box(2, 2, 0)
    assert spatial_predicate(a, b, ALL) == "left"
    # with left/right disabled the next firing rule wins
    assert spatial_predicate(a, b, ("front", "behind", "close by")) == "front"


def test_volume_rules_need_double_ratio():
    big = box(0, 0, 0, 2, 2, 2)       # volume 8
    small = box(0, 0, 0, 1, 1, 1)     # volume 1, concentric: no axis rule fires
    assert spatial_predicate(big, small, ALL) == "bigger than"
    assert spatial_predicate(small, big, ALL) == "smaller than"
    almost = box(0, 0, 0, 1.2, 1.2, 1.2)  # volume 1.728 < 2: not bigger
    assert spatial_predicate(almost, small, ALL) == "close by"


def test_close_by_needs_small_gap():
    a = box(0, 0, 0)
    near = box(0.8, 0, 0)   # overlapping: no separation, gap 0
    assert spatial_predicate(a, near, ALL) == "close by"
    lonely = box(0.8, 0, 0)
    assert spatial_predicate(a, lonely, ("front",)) is None


def test_box_gap_matches_hand_computation():
    a = box(0, 0, 0)
    assert box_gap(a, box(2, 0, 0)) == pytest.approx(1.0)     # faces 1 apart
    assert box_gap(a, box(0.5, 0, 0)) == 0.0                  # overlap
    diag = box_gap(a, box(2, 2, 0))
    assert diag == pytest.approx(np.sqrt(2.0))
    assert box_gap(a, a) == 0.0


def test_boxes_overlap_margin():
    a = box(0, 0, 0)
    assert boxes_overlap(a, box(1.02, 0, 0), margin=0.05)     # closer than margin
    assert not boxes_overlap(a, box(1.10, 0, 0), margin=0.05)


def identity_cam(width=64, f=50.0):
    intr = np.array([[f, 0, width / 2], [0, f, width / 2], [0, 0, 1.0]])
    extr = np.hstack([np.eye(3), np.zeros((3, 1))])
    return intr, extr


def test_render_depth_frozen_values():
    intr, extr = identity_cam()
    target = box(0, 0, 3)
    depth = render_depth([target], intr, extr, 64, 64)
    assert depth.shape == (64, 64) and depth.dtype == np.float32
    assert depth[32, 32] == pytest.approx(2.5, abs=1e-6)   # front face at z = 2.5
    assert depth[0, 0] == 0.0                              # background
    behind = render_depth([box(0, 0, -3)], intr, extr, 64, 64)
    assert np.all(behind == 0.0)


def test_render_depth_nearest_box_wins():
    intr, extr = identity_cam()
    far = box(0, 0, 4)
    near = box(0.5, 0.5, 2, 0.5, 0.5, 0.5)   # offset so both are visible
    depth = render_depth([far, near], intr, extr, 64, 64)
    assert depth[32, 32] == pytest.approx(3.5, abs=1e-6)   # centre misses near
    assert depth[44, 44] == pytest.approx(1.75, abs=1e-6)  # near front face


def test_oracle_triplet_vectors_are_disjoint_blocks():
    # float32 vectors: tolerances at f32 resolution
    cfg = small_synth(0)
    v1 = oracle_triplet_vector(cfg, 2, 5, 1)
    v2 = oracle_triplet_vector(cfg, 2, 5, 3)
    v3 = oracle_triplet_vector(cfg, 1, 5, 1)
    assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-6)
    assert float(v1 @ v2) == pytest.approx(2 / 3, abs=1e-6)  # share s and o
    assert float(v2 @ v3) == pytest.approx(1 / 3, abs=1e-6)  # share o only
    assert float(v1 @ oracle_triplet_vector(cfg, 3, 7, 2)) == pytest.approx(0.0)
    same = oracle_triplet_vector(cfg, 2, 5, 1)
    assert np.array_equal(v1, same)


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(k_min=5, k_max=4)
    with pytest.raises(ValueError):
        SynthConfig(relation_density=1.5)
    with pytest.raises(ValueError):
        SynthConfig(object_vocab_size=3, k_max=9)
    with pytest.raises(ValueError):
        SynthConfig(predicate_vocab_size=12)
    with pytest.raises(ValueError):
        SynthConfig(object_vocab_size=40, dim=64)  # 2*40 + 9 > 64
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"bogus_field": 1})
    cfg = small_synth(3)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_generated_scene_structural_invariants(scene):
    bundle, gt, triplets, tables = scene
    assert validate_scene(bundle).ok
    cfg = small_synth(42)
    assert cfg.k_min <= bundle.num_instances <= cfg.k_max
    assert len(bundle.views) == cfg.camera_count
    assert bundle.predicate_vocab[-1] == "none"
    assert bundle.predicate_vocab[:-1] == tuple(sorted(RULE_PRIORITY))
    # categories are distinct within a scene
    assert len(set(bundle.object_vocab)) == len(bundle.object_vocab)
    assert len(gt.node_labels) == bundle.num_instances
    for mask in bundle.masks:
        assert len(mask) == cfg.points_per_instance


def test_triplet_set_is_exact_gt_recount(scene):
    bundle, gt, triplets, _ = scene
    counts: dict[tuple[str, str, str], int] = {}
    for i, j, p in gt.edge_labels:
        key = (bundle.object_vocab[gt.node_labels[i]],
               bundle.predicate_vocab[p],
               bundle.object_vocab[gt.node_labels[j]])
        counts[key] = counts.get(key, 0) + 1
    expect = tuple(sorted((s, p, o, n) for (s, p, o), n in counts.items()))
    assert triplets.entries == expect
    assert len(triplets) > 0


def test_embedding_tables_cover_scene(scene):
    bundle, gt, triplets, tables = scene
    assert set(tables) == {"image", "object_text", "triplet_text"}
    assert tables["image"].note == "crop"
    # object text rows cover exactly the categories present in the scene
    present = sorted({bundle.object_vocab[l] for l in gt.node_labels})
    assert sorted(tables["object_text"].rows) == present
    from weaksg.pseudolabel import prompt_triplet
    for s, p, o, _ in triplets.entries:
        assert prompt_triplet(s, p, o) in tables["triplet_text"].rows
    for view in bundle.views:
        assert view.image_id in tables["image"].rows


def test_full_density_relates_every_pair():
    cfg = small_synth(9, relation_density=1.0, occluder_probability=0.0)
    bundle, gt, _, _ = generate_scene(cfg)
    k = bundle.num_instances
    assert len(gt.edge_labels) == k * (k - 1)


def test_thinning_leaves_none_pairs():
    cfg = small_synth(9, relation_density=0.5)
    bundle, gt, _, _ = generate_scene(cfg)
    k = bundle.num_instances
    assert 0 < len(gt.edge_labels) < k * (k - 1)


def test_generation_is_deterministic(tmp_path):
    cfg = small_synth(5)
    a, b = tmp_path / "a", tmp_path / "b"
    write_scene_dir(a, *generate_scene(cfg))
    write_scene_dir(b, *generate_scene(cfg))
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_different_seeds_differ():
    a = generate_scene(small_synth(5))[0]
    b = generate_scene(small_synth(6))[0]
    assert not np.array_equal(a.points, b.points)


def test_synth_batch_threads_do_not_change_output(tmp_path):
    cfg = small_synth(11)
    one = synth_batch(cfg, 3, tmp_path / "t1", threads=1)
    four = synth_batch(cfg, 3, tmp_path / "t4", threads=4)
    assert [p.name for p in one] == [p.name for p in four]
    for pa, pb in zip(one, four):
        for rel in sorted(x.relative_to(pa) for x in pa.rglob("*") if x.is_file()):
            assert (pa / rel).read_bytes() == (pb / rel).read_bytes()


def test_synth_batch_scene_i_uses_shifted_seed(tmp_path):
    cfg = small_synth(20)
    paths = synth_batch(cfg, 2, tmp_path / "batch")
    direct = tmp_path / "direct"
    write_scene_dir(direct, *generate_scene(small_synth(21)))
    batch_scene = paths[1]
    for rel in sorted(x.relative_to(direct) for x in direct.rglob("*") if x.is_file()):
        assert (direct / rel).read_bytes() == (batch_scene / rel).read_bytes()


def test_placement_failure_on_infeasible_room():
    cfg = small_synth(0, k_min=6, k_max=6, room_extent=1.2,
                      camera_count=2, occluder_probability=0.0)
    with pytest.raises(PlacementFailed):
        generate_scene(cfg)


def test_scene_dir_round_trip(tmp_path, scene):
    bundle, gt, triplets, tables = scene
    root = tmp_path / "scene"
    write_scene_dir(root, bundle, gt, triplets, tables)
    b2, gt2, t2, tab2 = read_scene_dir(root)
    assert b2.name == bundle.name
    assert np.array_equal(b2.points, bundle.points)
    assert gt2.edge_labels == gt.edge_labels
    assert t2.entries == triplets.entries
    assert set(tab2) == set(tables)


def test_pipeline_perfect_nodes_and_mask_filter_lift(scene, scene_weights):
    bundle, gt, triplets, tables = scene
    result = run_pipeline(bundle, tables, triplets, scene_weights,
                          cfg=SMALL_CFG, gt=gt)
    report = result.report
    assert report["format"] == "pipeline-report/1"
    pl = report["pseudo_labels"]
    # clean synthetic similarities: HMS must recover every node category
    assert pl["node_accuracy"] == 1.0
    assert pl["hungarian_nodes"] == bundle.num_instances
    assert 0.0 <= pl["relation_accuracy_unfiltered"] <= pl["relation_accuracy"] <= 1.0
    assert report["losses"]["l_total"] == pytest.approx(
        report["losses"]["l_obj"] + report["losses"]["l_rel"]
        + report["losses"]["alpha"] * report["losses"]["l_s"], rel=1e-12)
    assert "metrics" in report
    assert result.assignment.edge_source == "post_gnn"
    k = bundle.num_instances
    assert result.node_logits.shape[0] == k
    assert result.edge_logits.shape == (k * (k - 1), len(bundle.predicate_vocab))


def test_pipeline_initial_edge_source(scene, scene_weights):
    bundle, gt, triplets, tables = scene
    result = run_pipeline(bundle, tables, triplets, scene_weights,
                          cfg=SMALL_CFG, gt=gt, edge_source="initial")
    assert result.assignment.edge_source == "initial"
    with pytest.raises(ValueError):
        run_pipeline(bundle, tables, triplets, scene_weights,
                     cfg=SMALL_CFG, edge_source="bogus")


def test_pipeline_is_deterministic(scene, scene_weights):
    bundle, gt, triplets, tables = scene
    r1 = run_pipeline(bundle, tables, triplets, scene_weights, cfg=SMALL_CFG, gt=gt)
    r2 = run_pipeline(bundle, tables, triplets, scene_weights, cfg=SMALL_CFG, gt=gt)
    assert r1.report == r2.report
    assert np.array_equal(r1.node_logits, r2.node_logits)
    assert np.array_equal(r1.edge_logits, r2.edge_logits)


def test_stage_prefix_on_failures(scene, scene_weights):
    bundle, gt, triplets, tables = scene
    broken = dict(tables)
    broken["image"] = tables["object_text"]  # wrong table kind in the image slot
    with pytest.raises(EngineError) as err:
        run_pipeline(bundle, broken, triplets, scene_weights, cfg=SMALL_CFG)
    assert str(err.value).startswith("[")   # stage-tagged message


def test_run_scene_dir_and_batch(tmp_path):
    cfg = small_synth(31, camera_count=3)
    paths = synth_batch(cfg, 2, tmp_path / "scenes")
    single = run_scene_dir(paths[0], cfg=SMALL_CFG, seed=0)
    assert single.report["pseudo_labels"]["node_accuracy"] == 1.0
    batch = run_batch(paths, cfg=SMALL_CFG, seed=0)
    assert batch["format"] == "batch-report/1"
    assert len(batch["scenes"]) == 2
    assert list(batch["scenes"]) == sorted(batch["scenes"])
    assert "node_accuracy" in batch["mean_pseudo_labels"]
    again = run_batch(paths, cfg=SMALL_CFG, seed=0, threads=3)
    assert again == batch


def test_default_weights_shape(scene):
    bundle, _, _, _ = scene
    w = default_weights_for(bundle, SMALL_CFG, seed=1)
    assert w.meta.dim == SMALL_CFG.dim
    assert w.meta.num_object_classes == len(bundle.object_vocab)
    assert w.meta.num_predicate_classes == len(bundle.predicate_vocab)
    again = default_weights_for(bundle, SMALL_CFG, seed=1)
    assert all(np.array_equal(w[n], again[n]) for n in w.names())


def test_engine_config_defaults_match_contract():
    assert DEFAULT_CONFIG.dim == 512
    assert DEFAULT_CONFIG.layers == 2
    assert DEFAULT_CONFIG.tau == 0.1
    assert DEFAULT_CONFIG.alpha == 10.0
    assert DEFAULT_CONFIG.top_k_views == 5
    assert DEFAULT_CONFIG.eps_d == 0.05
    assert DEFAULT_CONFIG.crop_pad == 8
    assert DEFAULT_CONFIG.heads == 8
