"""Selective-scan state-space layers and their sparse (mask-guided) variants.

The scan is the input-dependent linear recurrence
    h_t = exp(dt_t * A) * h_{t-1} + dt_t * B_t * x_t,   y_t = C_t . h_t + D * x_t
with per-step B_t, C_t, dt_t projected from the token itself and dt pushed
through a softplus so every discretized decay lies in (0, 1). Sparse layers
gather kept tokens row-major, run the dense block on the short sequence, and
scatter results back; dropped tokens pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .egms import SparsificationMap
from .errors import ShapeMismatchError
from .tokens import TokenGrid

DEFAULT_STATE_DIM = 8
RMS_EPS = 1e-6


@dataclass(frozen=True)
class SSMParams:
    a: np.ndarray          # (C, Ds), all entries < 0
    w_b: np.ndarray        # (C, Ds)
    w_c: np.ndarray        # (C, Ds)
    w_delta: np.ndarray    # (C, C)
    delta_bias: np.ndarray  # (C,)
    skip: np.ndarray       # (C,)

    @property
    def channels(self):
        return self.a.shape[0]

    @property
    def state_dim(self):
        return self.a.shape[1]


@dataclass(frozen=True)
class LayerWeights:
    norm_gain: np.ndarray      # (C,)
    w_in: np.ndarray           # (C, C)
    w_gate: np.ndarray         # (C, C)
    w_out: np.ndarray          # (C, C)
    ssm_fwd: SSMParams
    ssm_bwd: SSMParams
    mlp_norm_gain: np.ndarray  # (C,)
    mlp_w1: np.ndarray         # (C, Ch)
    mlp_b1: np.ndarray         # (Ch,)
    mlp_w2: np.ndarray         # (Ch, C)
    mlp_b2: np.ndarray         # (C,)

    @property
    def channels(self):
        return self.norm_gain.shape[0]


def softplus(x):
    return np.logaddexp(0.0, x)


def silu(x):
    return x / (1.0 + np.exp(-x))


def rms_norm(seq: np.ndarray, gain: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.mean(seq ** 2, axis=-1, keepdims=True) + RMS_EPS)
    return seq / scale * gain


def _uniform(rng, fan_in, shape):
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


def make_ssm_params(channels: int, rng: np.random.Generator,
                    state_dim: int = DEFAULT_STATE_DIM) -> SSMParams:
    a = -np.tile(np.arange(1, state_dim + 1, dtype=np.float64), (channels, 1))
    return SSMParams(
        a=a,
        w_b=_uniform(rng, channels, (channels, state_dim)),
        w_c=_uniform(rng, channels, (channels, state_dim)),
        w_delta=_uniform(rng, channels, (channels, channels)),
        delta_bias=_uniform(rng, channels, (channels,)),
        skip=_uniform(rng, channels, (channels,)),
    )


def make_layer_weights(channels: int, rng: np.random.Generator,
                       state_dim: int = DEFAULT_STATE_DIM,
                       hidden_ratio: int = 2) -> LayerWeights:
    hidden = channels * hidden_ratio
    return LayerWeights(
        norm_gain=np.ones(channels),
        w_in=_uniform(rng, channels, (channels, channels)),
        w_gate=_uniform(rng, channels, (channels, channels)),
        w_out=_uniform(rng, channels, (channels, channels)),
        ssm_fwd=make_ssm_params(channels, rng, state_dim),
        ssm_bwd=make_ssm_params(channels, rng, state_dim),
        mlp_norm_gain=np.ones(channels),
        mlp_w1=_uniform(rng, channels, (channels, hidden)),
        mlp_b1=_uniform(rng, channels, (hidden,)),
        mlp_w2=_uniform(rng, hidden, (hidden, channels)),
        mlp_b2=_uniform(rng, hidden, (channels,)),
    )


def selective_scan(seq: np.ndarray, params: SSMParams,
                   direction: str = "forward") -> np.ndarray:
    """Run the recurrence over an (L, C) sequence.

    The backward direction scans the reversed sequence and re-reverses the
    output. Channels carry independent states (C, Ds) and are vectorized;
    the time loop is sequential by definition.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    if seq.ndim != 2:
        raise ShapeMismatchError("sequence must be (L, C)")
    length, channels = seq.shape
    if channels != params.channels:
        raise ShapeMismatchError(f"sequence has {channels} channels, params {params.channels}")
    if length == 0:
        return seq.copy()
    if direction == "backward":
        return selective_scan(seq[::-1], params, "forward")[::-1].copy()

    # projections are computed per step so a prefix of the sequence yields
    # bit-identical outputs to the same steps of the full run
    h = np.zeros((channels, params.state_dim))
    out = np.empty_like(seq)
    for t in range(length):
        x = seq[t]
        b_t = x @ params.w_b                                  # (Ds,)
        c_t = x @ params.w_c                                  # (Ds,)
        delta = softplus(x @ params.w_delta + params.delta_bias)  # (C,)
        decay = np.exp(delta[:, None] * params.a)             # (C, Ds)
        assert np.all((decay > 0.0) & (decay < 1.0)), "discretized decay left (0, 1)"
        h = decay * h + delta[:, None] * b_t[None, :] * x[:, None]
        out[t] = h @ c_t + params.skip * x
    return out


def bidi_scan(seq: np.ndarray, fwd: SSMParams, bwd: SSMParams) -> np.ndarray:
    """Sum of forward and backward selective scans."""
    return selective_scan(seq, fwd, "forward") + selective_scan(seq, bwd, "backward")


def vss_seq(seq: np.ndarray, w: LayerWeights) -> np.ndarray:
    """Dense VSS block on an (L, C) sequence: norm, project, bidirectional
    scan, gate, project out, residual."""
    if seq.shape[0] == 0:
        return seq.copy()
    h = rms_norm(seq, w.norm_gain)
    y = bidi_scan(h @ w.w_in, w.ssm_fwd, w.ssm_bwd)
    y = y * silu(h @ w.w_gate)
    return seq + y @ w.w_out


def mlp_seq(seq: np.ndarray, w: LayerWeights) -> np.ndarray:
    """Dense two-layer MLP block with residual on an (L, C) sequence."""
    if seq.shape[0] == 0:
        return seq.copy()
    h = rms_norm(seq, w.mlp_norm_gain)
    return seq + silu(h @ w.mlp_w1 + w.mlp_b1) @ w.mlp_w2 + w.mlp_b2


def _check_mask(grid: TokenGrid, mask: SparsificationMap):
    if mask.token_count != grid.token_count:
        raise ShapeMismatchError(
            f"mask has {mask.token_count} bits, grid {grid.token_count} tokens")


def sparse_vss_layer(grid: TokenGrid, mask: SparsificationMap,
                     weights: LayerWeights) -> TokenGrid:
    """VSS block on kept tokens only; dropped tokens are bit-identical."""
    _check_mask(grid, mask)
    flat = grid.flat()
    keep = mask.flat()
    out = flat.copy()
    out[keep] = vss_seq(flat[keep], weights)
    return TokenGrid(out.reshape(grid.features.shape), grid.stage_stride)


def sparse_mlp(grid: TokenGrid, mask: SparsificationMap,
               weights: LayerWeights) -> TokenGrid:
    """MLP block on kept tokens only; dropped tokens are bit-identical."""
    _check_mask(grid, mask)
    flat = grid.flat()
    keep = mask.flat()
    out = flat.copy()
    out[keep] = mlp_seq(flat[keep], weights)
    return TokenGrid(out.reshape(grid.features.shape), grid.stage_stride)
