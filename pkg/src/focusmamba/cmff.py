"""Cross-Modality Focus Fusion.

Two pieces: complementarity-aware enhancement, which scales one modality's
tokens by beta wherever the other modality kept a token it dropped, and the
focused interlaced scan, which gathers the union-mask tokens of both
modalities, alternates them into one sequence, runs a bidirectional
selective scan, and scatters results back. The fused sum is refined by a
sparse MLP under the union mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .egms import SparsificationMap
from .errors import (IndexMismatchError, IndexOutOfRangeError, OddLengthError,
                     ShapeMismatchError)
from .ssm import (LayerWeights, SSMParams, _uniform, bidi_scan,
                  make_layer_weights, make_ssm_params, sparse_mlp)
from .tokens import TokenGrid

DEFAULT_BETA = 1.5


@dataclass(frozen=True)
class GatheredSequence:
    tokens: np.ndarray   # (K, C)
    indices: np.ndarray  # (K,) strictly increasing row-major positions


@dataclass(frozen=True)
class FusionWeights:
    pre_image: np.ndarray      # (C, C)
    pre_image_b: np.ndarray    # (C,)
    dw_image: np.ndarray       # (C, 3, 3) depthwise kernel
    pre_event: np.ndarray
    pre_event_b: np.ndarray
    dw_event: np.ndarray
    ssm_fwd: SSMParams
    ssm_bwd: SSMParams
    mlp: LayerWeights          # only the mlp_* / mlp_norm_gain fields are used

    @property
    def channels(self):
        return self.pre_image.shape[0]


def make_fusion_weights(channels: int, rng: np.random.Generator,
                        state_dim: int = 8) -> FusionWeights:
    return FusionWeights(
        pre_image=_uniform(rng, channels, (channels, channels)),
        pre_image_b=_uniform(rng, channels, (channels,)),
        dw_image=_uniform(rng, 9, (channels, 3, 3)),
        pre_event=_uniform(rng, channels, (channels, channels)),
        pre_event_b=_uniform(rng, channels, (channels,)),
        dw_event=_uniform(rng, 9, (channels, 3, 3)),
        ssm_fwd=make_ssm_params(channels, rng, state_dim),
        ssm_bwd=make_ssm_params(channels, rng, state_dim),
        mlp=make_layer_weights(channels, rng, state_dim),
    )


def _check_lengths(m_a: SparsificationMap, m_b: SparsificationMap):
    if m_a.bits.shape != m_b.bits.shape:
        raise ShapeMismatchError(
            f"masks {m_a.bits.shape} vs {m_b.bits.shape}")


def complement_mask(m_e: SparsificationMap, m_i: SparsificationMap) -> np.ndarray:
    """Positions kept by the first mask but dropped by the second:
    m_e xor (m_e and m_i), which equals m_e and (not m_i)."""
    _check_lengths(m_e, m_i)
    return np.logical_xor(m_e.bits, np.logical_and(m_e.bits, m_i.bits))


def cae_map(diff: np.ndarray, beta: float) -> np.ndarray:
    """Enhancement map: beta where diff is set, 1 elsewhere."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return np.where(diff, beta, 1.0)


def cae_apply(enh: np.ndarray, grid: TokenGrid) -> TokenGrid:
    """Scale each token by its enhancement value across all channels."""
    if enh.shape != (grid.hs, grid.ws):
        raise ShapeMismatchError(f"map {enh.shape} vs grid {(grid.hs, grid.ws)}")
    return TokenGrid(grid.features * enh[:, :, None], grid.stage_stride)


def union_mask(m_i: SparsificationMap, m_e: SparsificationMap) -> SparsificationMap:
    _check_lengths(m_i, m_e)
    return SparsificationMap(np.logical_or(m_i.bits, m_e.bits))


def gather(grid: TokenGrid, mask: SparsificationMap) -> GatheredSequence:
    """Tokens at set-bit positions in ascending row-major order."""
    if mask.token_count != grid.token_count:
        raise ShapeMismatchError(
            f"mask has {mask.token_count} bits, grid {grid.token_count} tokens")
    idx = np.flatnonzero(mask.flat())
    return GatheredSequence(grid.flat()[idx].copy(), idx)


def interleave(seq_i: GatheredSequence, seq_e: GatheredSequence) -> np.ndarray:
    """Alternate the two sequences: image token first at each position."""
    if len(seq_i.indices) != len(seq_e.indices) or np.any(seq_i.indices != seq_e.indices):
        raise IndexMismatchError("sequences were gathered with different masks")
    k, c = seq_i.tokens.shape
    out = np.empty((2 * k, c))
    out[0::2] = seq_i.tokens
    out[1::2] = seq_e.tokens
    return out


def deinterleave(seq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if seq.shape[0] % 2:
        raise OddLengthError(f"sequence length {seq.shape[0]} is odd")
    return seq[0::2].copy(), seq[1::2].copy()


def scatter(seq: GatheredSequence, base: TokenGrid) -> TokenGrid:
    """Overwrite base tokens at the recorded indices; others untouched."""
    if len(seq.indices) and int(seq.indices.max()) >= base.token_count:
        raise IndexOutOfRangeError(
            f"index {int(seq.indices.max())} >= {base.token_count} tokens")
    out = base.flat().copy()
    out[seq.indices] = seq.tokens
    return TokenGrid(out.reshape(base.features.shape), base.stage_stride)


def depthwise_conv3x3(grid: TokenGrid, kernel: np.ndarray) -> TokenGrid:
    """3x3 depthwise spatial convolution with zero padding, per channel."""
    hs, ws, c = grid.features.shape
    if kernel.shape != (c, 3, 3):
        raise ShapeMismatchError(f"kernel {kernel.shape} vs channels {c}")
    f = grid.features
    out = np.zeros_like(f)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            ys0, ys1 = max(0, -dy), min(hs, hs - dy)
            xs0, xs1 = max(0, -dx), min(ws, ws - dx)
            out[ys0:ys1, xs0:xs1] += (
                f[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx] * kernel[:, dy + 1, dx + 1])
    return TokenGrid(out, grid.stage_stride)


def _preprocess(grid: TokenGrid, w_lin, b_lin, dw_kernel) -> TokenGrid:
    lin = TokenGrid(grid.features @ w_lin.T + b_lin, grid.stage_stride)
    return depthwise_conv3x3(lin, dw_kernel)


def fi_mamba(f_i: TokenGrid, f_e: TokenGrid, m_i: SparsificationMap,
             m_e: SparsificationMap, w: FusionWeights) -> tuple[TokenGrid, TokenGrid]:
    """Focused interlaced scan across both modalities.

    Preprocess each grid (linear + depthwise 3x3, spatial mixing before any
    gathering), gather both with the union mask, interleave, run the
    bidirectional scan, and scatter each modality's enhanced tokens (with a
    residual on the preprocessed value) back onto its preprocessed grid.
    """
    if f_i.features.shape != f_e.features.shape:
        raise ShapeMismatchError(
            f"grids {f_i.features.shape} vs {f_e.features.shape}")
    pre_i = _preprocess(f_i, w.pre_image, w.pre_image_b, w.dw_image)
    pre_e = _preprocess(f_e, w.pre_event, w.pre_event_b, w.dw_event)
    m = union_mask(m_i, m_e)
    gi = gather(pre_i, m)
    ge = gather(pre_e, m)
    seq = interleave(gi, ge)
    y = bidi_scan(seq, w.ssm_fwd, w.ssm_bwd)
    enh_i, enh_e = deinterleave(seq + y)
    out_i = scatter(GatheredSequence(enh_i, gi.indices), pre_i)
    out_e = scatter(GatheredSequence(enh_e, ge.indices), pre_e)
    return out_i, out_e


def cmff(f_i: TokenGrid, f_e: TokenGrid, m_i: SparsificationMap,
         m_e: SparsificationMap, w: FusionWeights,
         beta: float = DEFAULT_BETA) -> TokenGrid:
    """Full fusion: CAE in both directions, interlaced scan, sum, sparse MLP.

    The image grid is enhanced where the event mask kept what the image
    dropped, and symmetrically for the event grid. The fused sum is refined
    only at union-mask positions.
    """
    enh_i = cae_apply(cae_map(complement_mask(m_e, m_i), beta), f_i)
    enh_e = cae_apply(cae_map(complement_mask(m_i, m_e), beta), f_e)
    out_i, out_e = fi_mamba(enh_i, enh_e, m_i, m_e, w)
    fused = TokenGrid(out_i.features + out_e.features, f_i.stage_stride)
    return sparse_mlp(fused, union_mask(m_i, m_e), w.mlp)
