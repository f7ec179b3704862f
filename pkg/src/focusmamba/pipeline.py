"""Four-stage dual-modality backbone with per-stage sparsification and fusion.

Both modalities are patch-embedded at stride 4, then run four stages of
sparse VSS blocks with 2x merges between stages. Token masks are computed at
each stage entry and govern every block in the stage; fusion happens after
stages 2-4. All weights are generated deterministically from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cmff import DEFAULT_BETA, FusionWeights, cmff, make_fusion_weights
from .egms import (EGCMParams, SparsificationMap, egms_stage, make_mask_topk,
                   normalize_scores, score_event_spatiotemporal,
                   score_event_temporal, score_image_l2)
from .errors import ShapeMismatchError
from .events import EventStream, event_spatial_ratio, voxelize
from .flops import FlopReport, count_flops
from .ssm import LayerWeights, make_layer_weights, sparse_mlp, sparse_vss_layer
from .tokens import STAGE_STRIDES, StageConfig, TokenGrid, patch_embed, patch_merge


@dataclass(frozen=True)
class ModelConfig:
    height: int = 64
    width: int = 64
    channels: tuple[int, ...] = (16, 32, 64, 128)
    blocks: tuple[int, ...] = (1, 1, 2, 1)
    state_dim: int = 8
    hidden_ratio: int = 2
    voxel_bins: int = 5
    egcm: EGCMParams = field(default_factory=EGCMParams)
    beta: float = DEFAULT_BETA
    seed: int = 0
    stage1_override: bool = True
    sparsify: bool = True

    def __post_init__(self):
        if self.height % 32 or self.width % 32:
            raise ValueError("input size must be divisible by 32")
        if len(self.channels) != 4 or len(self.blocks) != 4:
            raise ValueError("exactly four stages are required")

    def stage_configs(self) -> list[StageConfig]:
        return [
            StageConfig(i + 1, STAGE_STRIDES[i], self.channels[i], self.blocks[i])
            for i in range(4)
        ]

    def with_(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class PipelineWeights:
    image_embed: tuple[np.ndarray, np.ndarray]
    event_embed: tuple[np.ndarray, np.ndarray]
    image_merge: list[tuple[np.ndarray, np.ndarray]]  # stages 2-4
    event_merge: list[tuple[np.ndarray, np.ndarray]]
    image_blocks: list[list[LayerWeights]]            # per stage
    event_blocks: list[list[LayerWeights]]
    fusion: list[FusionWeights]                       # stages 2-4


@dataclass(frozen=True)
class StageOutput:
    stage_index: int
    image_grid: TokenGrid
    event_grid: TokenGrid
    fused: TokenGrid | None
    mask_image: SparsificationMap
    mask_event: SparsificationMap
    r: float

    @property
    def kept_ratio_image(self):
        return self.mask_image.kept_ratio

    @property
    def kept_ratio_event(self):
        return self.mask_event.kept_ratio


def _embed_weights(rng, cin, patch, cout):
    fan_in = cin * patch * patch
    lim = 1.0 / np.sqrt(fan_in)
    return (rng.uniform(-lim, lim, size=(cout, fan_in)),
            rng.uniform(-lim, lim, size=cout))


def _merge_weights(rng, c_in, c_out):
    lim = 1.0 / np.sqrt(4 * c_in)
    return (rng.uniform(-lim, lim, size=(c_out, 4 * c_in)),
            rng.uniform(-lim, lim, size=c_out))


def init_weights(config: ModelConfig, seed: int | None = None) -> PipelineWeights:
    """Deterministic weight set; creation order is fixed so a seed pins
    every array."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    chans = config.channels
    image_embed = _embed_weights(rng, 3, STAGE_STRIDES[0], chans[0])
    event_embed = _embed_weights(rng, config.voxel_bins, STAGE_STRIDES[0], chans[0])
    image_merge = [_merge_weights(rng, chans[i], chans[i + 1]) for i in range(3)]
    event_merge = [_merge_weights(rng, chans[i], chans[i + 1]) for i in range(3)]
    image_blocks = [
        [make_layer_weights(chans[s], rng, config.state_dim, config.hidden_ratio)
         for _ in range(config.blocks[s])]
        for s in range(4)
    ]
    event_blocks = [
        [make_layer_weights(chans[s], rng, config.state_dim, config.hidden_ratio)
         for _ in range(config.blocks[s])]
        for s in range(4)
    ]
    fusion = [make_fusion_weights(chans[s], rng, config.state_dim) for s in range(1, 4)]
    return PipelineWeights(image_embed, event_embed, image_merge, event_merge,
                           image_blocks, event_blocks, fusion)


def _all_ones_mask(grid: TokenGrid) -> SparsificationMap:
    return SparsificationMap(np.ones((grid.hs, grid.ws), dtype=bool))


def run_backbone(image: np.ndarray, stream: EventStream, config: ModelConfig,
                 weights: PipelineWeights,
                 fixed_kept: list[tuple[int, int]] | None = None,
                 ) -> tuple[list[StageOutput], FlopReport]:
    """Run both backbones and fusion; return per-stage outputs and the
    analytic FLOP report for the masks this run produced.

    fixed_kept replaces the adaptive threshold with per-stage fixed token
    budgets (image, event): each modality keeps its top-k tokens by raw
    score, with no stage-1 override. Used as the fixed-kept-rate baseline.
    """
    if image.shape != (3, config.height, config.width):
        raise ShapeMismatchError(
            f"image {image.shape} vs config (3, {config.height}, {config.width})")
    geo = stream.geometry
    if (geo.width, geo.height) != (config.width, config.height):
        raise ShapeMismatchError(
            f"sensor {geo.width}x{geo.height} vs config {config.width}x{config.height}")

    r = event_spatial_ratio(stream, config.egcm.epsilon_r)
    voxel = voxelize(stream, config.voxel_bins)
    img = patch_embed(image, STAGE_STRIDES[0], *weights.image_embed)
    evt = patch_embed(voxel.values, STAGE_STRIDES[0], *weights.event_embed)

    outputs: list[StageOutput] = []
    masks = []
    for stage in config.stage_configs():
        s = stage.stage_index
        if s > 1:
            img = patch_merge(img, *weights.image_merge[s - 2])
            evt = patch_merge(evt, *weights.event_merge[s - 2])
        if fixed_kept is not None:
            k_i, k_e = fixed_kept[s - 1]
            s_i = normalize_scores(score_image_l2(img))
            temporal = score_event_temporal(stream, stage.stride, (evt.hs, evt.ws))
            s_e = normalize_scores(score_event_spatiotemporal(temporal, config.egcm))
            m_i, m_e = make_mask_topk(s_i, k_i), make_mask_topk(s_e, k_e)
        elif config.sparsify:
            m_i, m_e = egms_stage(img, evt, stream, stage, config.egcm, r=r,
                                  stage1_override=config.stage1_override)
        else:
            m_i, m_e = _all_ones_mask(img), _all_ones_mask(evt)
        for bw_i, bw_e in zip(weights.image_blocks[s - 1], weights.event_blocks[s - 1]):
            img = sparse_mlp(sparse_vss_layer(img, m_i, bw_i), m_i, bw_i)
            evt = sparse_mlp(sparse_vss_layer(evt, m_e, bw_e), m_e, bw_e)
        fused = None
        if s >= 2:
            fused = cmff(img, evt, m_i, m_e, weights.fusion[s - 2], config.beta)
        outputs.append(StageOutput(s, img, evt, fused, m_i, m_e, r))
        masks.append((m_i, m_e))
    return outputs, count_flops(config, masks)
