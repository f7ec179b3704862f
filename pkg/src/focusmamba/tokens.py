"""Patch tokenization and 2x patch merging for the four-stage backbone.

Stage strides are fixed at {4, 8, 16, 32}: patch size 4 at stage 1 followed
by three 2x merges. Token order everywhere is row-major over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

STAGE_STRIDES = (4, 8, 16, 32)


@dataclass(frozen=True)
class TokenGrid:
    features: np.ndarray  # (hs, ws, C) float64
    stage_stride: int

    @property
    def hs(self):
        return self.features.shape[0]

    @property
    def ws(self):
        return self.features.shape[1]

    @property
    def channels(self):
        return self.features.shape[2]

    @property
    def token_count(self):
        return self.hs * self.ws

    def flat(self) -> np.ndarray:
        """Row-major (N, C) view of the tokens."""
        return self.features.reshape(-1, self.channels)


@dataclass(frozen=True)
class StageConfig:
    stage_index: int  # 1..4
    stride: int
    channels: int
    block_count: int


def patch_embed(inp: np.ndarray, patch: int, weights: np.ndarray,
                bias: np.ndarray | None = None) -> TokenGrid:
    """Linear projection of non-overlapping P x P patches.

    inp is (Cin, H, W); weights is (C, Cin*P*P) applied to each patch
    flattened in (Cin, P, P) order.
    """
    cin, h, w = inp.shape
    if h % patch or w % patch:
        raise ShapeMismatchError(f"{h}x{w} input not divisible by patch {patch}")
    c_out = weights.shape[0]
    if weights.shape[1] != cin * patch * patch:
        raise ShapeMismatchError(
            f"weights expect {weights.shape[1]} inputs, patch gives {cin * patch * patch}")
    hs, ws = h // patch, w // patch
    # (Cin, hs, P, ws, P) -> (hs, ws, Cin, P, P) -> (hs, ws, Cin*P*P)
    patches = inp.reshape(cin, hs, patch, ws, patch).transpose(1, 3, 0, 2, 4)
    patches = np.ascontiguousarray(patches).reshape(hs, ws, cin * patch * patch)
    feats = patches @ weights.T
    if bias is not None:
        feats = feats + bias
    return TokenGrid(feats, stage_stride=patch)


def patch_merge(grid: TokenGrid, weights: np.ndarray,
                bias: np.ndarray | None = None) -> TokenGrid:
    """Concatenate each 2x2 token neighborhood and project 4C -> C'.

    Concatenation order is (0,0), (0,1), (1,0), (1,1) within the window.
    The stage stride doubles.
    """
    hs, ws, c = grid.features.shape
    if hs % 2 or ws % 2:
        raise ShapeMismatchError(f"grid {hs}x{ws} not even")
    if weights.shape[1] != 4 * c:
        raise ShapeMismatchError(f"weights expect {weights.shape[1]} inputs, have {4 * c}")
    f = grid.features
    cat = np.concatenate(
        [f[0::2, 0::2], f[0::2, 1::2], f[1::2, 0::2], f[1::2, 1::2]], axis=-1)
    feats = cat @ weights.T
    if bias is not None:
        feats = feats + bias
    return TokenGrid(feats, stage_stride=grid.stage_stride * 2)
