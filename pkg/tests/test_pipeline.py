import numpy as np
import pytest

from focusmamba import (ModelConfig, init_weights, run_backbone, synth_scene,
                        synth_suite)
from focusmamba.errors import ShapeMismatchError
from focusmamba.events import SensorGeometry, validate_stream
from focusmamba.flops import TOKEN_DEPENDENT

from conftest import random_stream
from oracles import dense_pipeline, recount_flops


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(height=60)
    with pytest.raises(ValueError):
        ModelConfig(channels=(8, 16, 32))
    cfg = ModelConfig().with_(seed=7)
    assert cfg.seed == 7 and cfg.height == 64


def test_stage_configs_strides_and_channels(default_config):
    stages = default_config.stage_configs()
    assert [s.stride for s in stages] == [4, 8, 16, 32]
    assert [s.channels for s in stages] == [16, 32, 64, 128]
    assert [s.block_count for s in stages] == [1, 1, 2, 1]


def test_init_weights_deterministic(default_config):
    w1 = init_weights(default_config)
    w2 = init_weights(default_config)
    assert np.array_equal(w1.image_embed[0], w2.image_embed[0])
    assert np.array_equal(w1.fusion[2].dw_event, w2.fusion[2].dw_event)
    w3 = init_weights(default_config, seed=1)
    assert not np.array_equal(w1.image_embed[0], w3.image_embed[0])


def test_run_backbone_shapes(default_config, default_weights):
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(3, 64, 64))
    stream = random_stream(rng)
    outputs, report = run_backbone(image, stream, default_config, default_weights)
    assert len(outputs) == 4
    for s, out in enumerate(outputs, start=1):
        hs = 64 // (4 * 2 ** (s - 1))
        assert out.image_grid.features.shape == (hs, hs, default_config.channels[s - 1])
        assert out.event_grid.features.shape == out.image_grid.features.shape
        assert out.mask_image.bits.shape == (hs, hs)
        if s == 1:
            assert out.fused is None
        else:
            assert out.fused.features.shape == out.image_grid.features.shape
    assert report.dense_total > report.sparse_total > 0


def test_run_backbone_rejects_bad_inputs(default_config, default_weights):
    rng = np.random.default_rng(1)
    stream = random_stream(rng)
    with pytest.raises(ShapeMismatchError):
        run_backbone(np.zeros((3, 32, 64)), stream, default_config, default_weights)
    small = random_stream(rng, width=32, height=32)
    with pytest.raises(ShapeMismatchError):
        run_backbone(np.zeros((3, 64, 64)), small, default_config, default_weights)


def test_run_backbone_deterministic(default_config, default_weights):
    scene = synth_scene(5, "medium")
    a, _ = run_backbone(scene.image, scene.stream, default_config, default_weights)
    b, _ = run_backbone(scene.image, scene.stream, default_config, default_weights)
    for oa, ob in zip(a, b):
        assert np.array_equal(oa.image_grid.features, ob.image_grid.features)
        assert np.array_equal(oa.mask_event.bits, ob.mask_event.bits)
        if oa.fused is not None:
            assert np.array_equal(oa.fused.features, ob.fused.features)


def test_dense_mode_matches_oracle(default_config, default_weights):
    scene = synth_scene(3, "medium")
    cfg = default_config.with_(sparsify=False)
    outputs, report = run_backbone(scene.image, scene.stream, cfg, default_weights)
    ref = dense_pipeline(scene.image, scene.stream, cfg, default_weights)
    for out, (img, evt, fused) in zip(outputs, ref):
        assert np.allclose(out.image_grid.features, img.features, rtol=1e-9)
        assert np.allclose(out.event_grid.features, evt.features, rtol=1e-9)
        if fused is not None:
            assert np.allclose(out.fused.features, fused.features, rtol=1e-9)
    assert report.sparse_total == report.dense_total


def test_stage1_override_ties_masks(default_config, default_weights):
    scene = synth_scene(4, "dense")
    outputs, _ = run_backbone(scene.image, scene.stream, default_config,
                              default_weights)
    assert np.array_equal(outputs[0].mask_image.bits, outputs[0].mask_event.bits)
    cfg = default_config.with_(stage1_override=False)
    outputs2, _ = run_backbone(scene.image, scene.stream, cfg, default_weights)
    assert outputs2[0].mask_image.bits.shape == outputs[0].mask_image.bits.shape


def test_ratio_constant_across_stages(default_config, default_weights):
    scene = synth_scene(6, "sparse")
    outputs, _ = run_backbone(scene.image, scene.stream, default_config,
                              default_weights)
    assert len({out.r for out in outputs}) == 1


def test_fixed_kept_budgets_respected(default_config, default_weights):
    scene = synth_scene(7, "medium")
    budgets = [(100, 90), (40, 30), (10, 8), (4, 2)]
    outputs, _ = run_backbone(scene.image, scene.stream, default_config,
                              default_weights, fixed_kept=budgets)
    for out, (k_i, k_e) in zip(outputs, budgets):
        assert out.mask_image.kept_count == k_i
        assert out.mask_event.kept_count == k_e


def test_flop_report_consistency(default_config, default_weights):
    scene = synth_scene(8, "dense")
    _, report = run_backbone(scene.image, scene.stream, default_config,
                             default_weights)
    d = report.to_dict()
    assert d["totals"]["dense_macs"] == sum(e["dense_macs"] for e in d["entries"])
    assert d["totals"]["sparse_macs"] == sum(e["sparse_macs"] for e in d["entries"])
    for e in d["entries"]:
        if e["component"] not in TOKEN_DEPENDENT:
            assert e["dense_macs"] == e["sparse_macs"]
        else:
            assert e["sparse_macs"] <= e["dense_macs"]


def test_flop_report_matches_recount(default_config, default_weights):
    scene = synth_scene(9, "medium")
    outputs, report = run_backbone(scene.image, scene.stream, default_config,
                                   default_weights)
    masks = [(o.mask_image, o.mask_event) for o in outputs]
    dense, sparse, td_dense, td_sparse = recount_flops(default_config, masks)
    assert report.dense_total == dense
    assert report.sparse_total == sparse
    d = report.to_dict()["token_dependent"]
    assert d["dense_macs"] == td_dense
    assert d["sparse_macs"] == td_sparse


def test_synth_scene_basic_properties():
    scene = synth_scene(0, "medium")
    assert scene.image.shape == (3, 64, 64)
    assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0
    assert scene.object_mask.shape == (64, 64)
    assert len(scene.stream) > 0
    geo = scene.stream.geometry
    assert (geo.window_start, geo.window_end) == (0, 50_000)
    with pytest.raises(ValueError):
        synth_scene(0, "bogus")


def test_synth_scene_deterministic():
    a = synth_scene(11, "dense")
    b = synth_scene(11, "dense")
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.stream.ts, b.stream.ts)
    c = synth_scene(12, "dense")
    assert not np.array_equal(a.image, c.image)


def test_synth_complexity_orders_event_density():
    rs = {}
    for name in ("sparse", "medium", "dense"):
        rs[name] = np.mean([synth_scene(s, name).object_mask.mean()
                            for s in range(4)])
    assert rs["sparse"] < rs["medium"] <= rs["dense"] * 1.2


def test_synth_suite_size_and_variety():
    suite = synth_suite(20)
    assert len(suite) == 20
    ratios = [s.object_mask.mean() for s in suite]
    assert min(ratios) < 0.05 and max(ratios) > 0.2


def test_suite_mean_reduction_in_band(suite_runs):
    mean = np.mean([r.token_dependent_reduction_pct for _, _, r in suite_runs])
    assert 20.0 <= mean <= 40.0
