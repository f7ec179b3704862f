import numpy as np
import pytest

from focusmamba import ModelConfig, init_weights
from focusmamba.egms import SparsificationMap
from focusmamba.errors import ParseError
from focusmamba.events import SensorGeometry, validate_stream, voxelize
from focusmamba.formats import (load_events, parse_config, parse_events_csv,
                                parse_events_evt1, read_image, read_mask_pgm,
                                read_pnm, read_scores, read_sections,
                                read_token_grid, read_voxel, render_config,
                                sections_to_weights, weights_to_sections,
                                write_events_csv, write_events_evt1,
                                write_mask_pgm, write_pgm, write_ppm,
                                write_scores, write_sections,
                                write_token_grid, write_voxel)
from focusmamba.tokens import TokenGrid

from conftest import random_stream

GEO = SensorGeometry(64, 64, 0, 1000)


def test_csv_round_trip():
    stream = validate_stream([(1, 2, 3, 1), (4, 5, 6, -1)], GEO)
    text = write_events_csv(stream)
    assert parse_events_csv(text) == [(1, 2, 3, 1), (4, 5, 6, -1)]


def test_csv_header_and_zero_polarity():
    assert parse_events_csv("x,y,t,p\n1,2,3,0\n") == [(1, 2, 3, -1)]
    assert parse_events_csv("# comment\n\n1,2,3,1\n") == [(1, 2, 3, 1)]


def test_csv_errors_report_line():
    with pytest.raises(ParseError) as exc:
        parse_events_csv("1,2,3,1\n4,5,6\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        parse_events_csv("1,2,3,1\na,b,c,d\n")


def test_evt1_round_trip():
    rng = np.random.default_rng(0)
    stream = random_stream(rng, count=50)
    raw = parse_events_evt1(write_events_evt1(stream))
    assert raw == list(zip(stream.xs.tolist(), stream.ys.tolist(),
                           stream.ts.tolist(), stream.ps.tolist()))


def test_evt1_rejects_bad_magic_and_truncation():
    with pytest.raises(ParseError):
        parse_events_evt1(b"NOPE" + b"\x00" * 8)
    stream = validate_stream([(1, 2, 3, 1)], GEO)
    data = write_events_evt1(stream)
    with pytest.raises(ParseError):
        parse_events_evt1(data[:-1])


def test_load_events_sniffs_format(tmp_path):
    rng = np.random.default_rng(1)
    stream = random_stream(rng, count=30)
    csv_path = tmp_path / "events.csv"
    bin_path = tmp_path / "events.evt1"
    csv_path.write_text(write_events_csv(stream))
    bin_path.write_bytes(write_events_evt1(stream))
    geo = stream.geometry
    a = load_events(csv_path, geo)
    b = load_events(bin_path, geo)
    assert np.array_equal(a.ts, stream.ts) and np.array_equal(b.xs, stream.xs)


def test_voxel_round_trip():
    rng = np.random.default_rng(2)
    grid = voxelize(random_stream(rng, width=16, height=16, count=40), 4)
    back = read_voxel(write_voxel(grid))
    assert back.values.shape == grid.values.shape
    assert np.allclose(back.values, grid.values, atol=1e-6)


def test_token_grid_round_trip():
    rng = np.random.default_rng(3)
    grid = TokenGrid(rng.normal(size=(4, 6, 8)), 16)
    back = read_token_grid(write_token_grid(grid))
    assert back.stage_stride == 16
    assert np.allclose(back.features, grid.features, atol=1e-6)


def test_scores_round_trip_is_exact():
    rng = np.random.default_rng(4)
    scores = rng.normal(size=37)
    assert np.array_equal(read_scores(write_scores(scores)), scores)


def test_truncated_binary_dumps_raise():
    rng = np.random.default_rng(5)
    grid = TokenGrid(rng.normal(size=(2, 2, 3)), 4)
    with pytest.raises(ParseError):
        read_token_grid(write_token_grid(grid)[:-4])
    with pytest.raises(ParseError):
        read_voxel(b"\x01\x00")


def test_pgm_ppm_round_trips():
    rng = np.random.default_rng(6)
    gray = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
    assert np.array_equal(read_pnm(write_pgm(gray)), gray)
    color = rng.integers(0, 256, size=(3, 4, 6), dtype=np.uint8)
    assert np.array_equal(read_pnm(write_ppm(color)), color)


def test_pnm_comments_and_errors():
    gray = np.arange(4, dtype=np.uint8).reshape(2, 2)
    data = b"P5\n# a comment\n2 2\n255\n" + gray.tobytes()
    assert np.array_equal(read_pnm(data), gray)
    with pytest.raises(ParseError):
        read_pnm(b"P4\n1 1\n255\n\x00")
    with pytest.raises(ParseError):
        read_pnm(b"P5\n2 2\n65535\n" + b"\x00" * 8)


def test_read_image_scales_and_replicates(tmp_path):
    gray = np.full((2, 2), 128, dtype=np.uint8)
    p = tmp_path / "g.pgm"
    p.write_bytes(write_pgm(gray))
    img = read_image(p)
    assert img.shape == (3, 2, 2)
    assert np.allclose(img, 128 / 255)


def test_mask_pgm_round_trip():
    rng = np.random.default_rng(7)
    mask = SparsificationMap(rng.uniform(size=(8, 8)) < 0.5)
    back = read_mask_pgm(write_mask_pgm(mask))
    assert np.array_equal(back.bits, mask.bits)


def test_config_round_trip():
    cfg = ModelConfig(seed=42, beta=2.0, stage1_override=False)
    back = parse_config(render_config(cfg))
    assert back == cfg


def test_config_parse_features():
    cfg = parse_config("seed = 9\nrho = 3.0  # comment\n\nsparsify = off\n")
    assert cfg.seed == 9 and cfg.egcm.rho == 3.0 and not cfg.sparsify
    with pytest.raises(ParseError):
        parse_config("bogus_key = 1\n")
    with pytest.raises(ParseError):
        parse_config("just words\n")


def test_weight_sections_round_trip():
    sections = {"a": np.arange(6.0).reshape(2, 3), "b": np.array(3.5)}
    back = read_sections(write_sections(sections))
    assert set(back) == {"a", "b"}
    assert np.array_equal(back["a"], sections["a"])
    assert back["b"] == 3.5
    with pytest.raises(ParseError):
        read_sections(b"XXXX")


def test_pipeline_weights_file_round_trip():
    cfg = ModelConfig()
    weights = init_weights(cfg)
    sections = weights_to_sections(weights)
    back = sections_to_weights(read_sections(write_sections(sections)), cfg)
    assert np.array_equal(back.image_embed[0], weights.image_embed[0])
    assert np.array_equal(back.event_merge[1][1], weights.event_merge[1][1])
    assert np.array_equal(back.image_blocks[2][1].w_in,
                          weights.image_blocks[2][1].w_in)
    assert np.array_equal(back.fusion[0].ssm_bwd.w_delta,
                          weights.fusion[0].ssm_bwd.w_delta)
    assert np.array_equal(back.fusion[2].mlp.mlp_w2, weights.fusion[2].mlp.mlp_w2)
