import numpy as np
import pytest

from focusmamba.errors import ShapeMismatchError
from focusmamba.tokens import TokenGrid, patch_embed, patch_merge

from oracles import patch_embed_loop, patch_merge_loop


def test_patch_embed_zero_input_gives_zero_tokens():
    w = np.random.default_rng(0).normal(size=(6, 16))
    grid = patch_embed(np.zeros((1, 8, 8)), 4, w)
    assert grid.features.shape == (2, 2, 6)
    assert np.all(grid.features == 0)


def test_patch_embed_selector_weight_picks_pixel():
    inp = np.arange(64, dtype=float).reshape(1, 8, 8)
    w = np.zeros((1, 16))
    w[0, 0] = 1.0  # first element of the flattened patch
    grid = patch_embed(inp, 4, w)
    assert grid.features[0, 0, 0] == inp[0, 0, 0]
    assert grid.features[1, 1, 0] == inp[0, 4, 4]


def test_patch_embed_matches_loop_oracle():
    rng = np.random.default_rng(42)
    inp = rng.normal(size=(3, 16, 16))
    w = rng.normal(size=(5, 48))
    b = rng.normal(size=5)
    grid = patch_embed(inp, 4, w, b)
    assert np.allclose(grid.features, patch_embed_loop(inp, 4, w, b), atol=1e-12)


def test_patch_embed_rejects_indivisible():
    with pytest.raises(ShapeMismatchError):
        patch_embed(np.zeros((1, 9, 8)), 4, np.zeros((2, 16)))


def test_patch_merge_shape_and_stride():
    grid = TokenGrid(np.random.default_rng(1).normal(size=(2, 2, 3)), 4)
    w = np.zeros((7, 12))
    merged = patch_merge(grid, w)
    assert merged.features.shape == (1, 1, 7)
    assert merged.stage_stride == 8


def test_patch_merge_zero_grid():
    grid = TokenGrid(np.zeros((4, 4, 3)), 4)
    merged = patch_merge(grid, np.random.default_rng(2).normal(size=(5, 12)))
    assert np.all(merged.features == 0)


def test_patch_merge_matches_loop_oracle():
    rng = np.random.default_rng(3)
    grid = TokenGrid(rng.normal(size=(4, 4, 8)), 4)
    w = rng.normal(size=(6, 32))
    b = rng.normal(size=6)
    merged = patch_merge(grid, w, b)
    assert np.allclose(merged.features, patch_merge_loop(grid.features, w, b),
                       atol=1e-12)


def test_patch_merge_rejects_odd_dims():
    with pytest.raises(ShapeMismatchError):
        patch_merge(TokenGrid(np.zeros((3, 4, 2)), 4), np.zeros((2, 8)))


def test_bias_free_linearity():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(5, 48))
    u = rng.normal(size=(3, 16, 16))
    v = rng.normal(size=(3, 16, 16))
    a, b = 1.7, -0.3
    lhs = patch_embed(a * u + b * v, 4, w).features
    rhs = a * patch_embed(u, 4, w).features + b * patch_embed(v, 4, w).features
    assert np.allclose(lhs, rhs, rtol=1e-6)

    wm = rng.normal(size=(6, 20))
    gu = TokenGrid(rng.normal(size=(4, 4, 5)), 4)
    gv = TokenGrid(rng.normal(size=(4, 4, 5)), 4)
    lhs = patch_merge(TokenGrid(a * gu.features + b * gv.features, 4), wm).features
    rhs = a * patch_merge(gu, wm).features + b * patch_merge(gv, wm).features
    assert np.allclose(lhs, rhs, rtol=1e-6)


def test_token_count_matches_stride():
    rng = np.random.default_rng(5)
    grid = patch_embed(rng.normal(size=(3, 64, 64)), 4, rng.normal(size=(4, 48)))
    assert grid.token_count == (64 // 4) ** 2
    merged = patch_merge(grid, rng.normal(size=(8, 16)))
    assert merged.token_count == (64 // 8) ** 2
