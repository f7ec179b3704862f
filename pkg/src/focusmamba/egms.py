"""Event-Guided Multi-modality Sparsification.

Each stage scores tokens per modality (L2 activation for image tokens,
timestamp accumulation + Gaussian neighborhood aggregation for events),
sharpens the scores with a softmax whose temperature is the scale factor
r**(1/rho), and thresholds at alpha = control / N with
control = (1 - r)**(1/rho). r is the event spatial ratio of the sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .events import EPSILON_R, EventStream, event_spatial_ratio
from .tokens import StageConfig, TokenGrid


@dataclass(frozen=True)
class EGCMParams:
    rho: float = 2.0
    epsilon_r: float = EPSILON_R
    sigma: float = 1.0
    neighborhood: int = 1  # Gaussian window radius

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.neighborhood < 1:
            raise ValueError("neighborhood radius must be >= 1")


@dataclass(frozen=True)
class SparsificationMap:
    """Binary keep/drop decision per token, row-major over the grid."""

    bits: np.ndarray  # bool, (hs, ws)

    @property
    def kept_count(self) -> int:
        return int(self.bits.sum())

    @property
    def token_count(self) -> int:
        return self.bits.size

    @property
    def kept_ratio(self) -> float:
        return self.kept_count / self.token_count

    def flat(self) -> np.ndarray:
        return self.bits.reshape(-1)


def score_image_l2(grid: TokenGrid) -> np.ndarray:
    """Per-token L2 activation norm, shape (hs, ws)."""
    return np.sqrt(np.sum(grid.features ** 2, axis=-1))


def score_event_temporal(stream: EventStream, stride: int,
                         grid_shape: tuple[int, int]) -> np.ndarray:
    """Sum window-relative timestamps per pixel, then max-pool to tokens.

    Pool kernel and stride both equal the stage stride. Relative timestamps
    (t - window_start) keep the scores independent of the wall-clock epoch.
    """
    hs, ws = grid_shape
    geo = stream.geometry
    if hs * stride != geo.height or ws * stride != geo.width:
        raise ShapeMismatchError(
            f"grid {hs}x{ws} at stride {stride} does not cover sensor "
            f"{geo.height}x{geo.width}")
    per_pixel = np.zeros((geo.height, geo.width), dtype=np.float64)
    if len(stream):
        np.add.at(per_pixel, (stream.ys, stream.xs),
                  (stream.ts - geo.window_start).astype(np.float64))
    pooled = per_pixel.reshape(hs, stride, ws, stride).max(axis=(1, 3))
    return pooled


def score_event_spatiotemporal(temporal: np.ndarray, params: EGCMParams) -> np.ndarray:
    """Gaussian-weighted neighborhood mean of the temporal scores.

    Boundary tokens use the truncated in-bounds neighborhood; the
    denominator renormalizes the weights either way.
    """
    hs, ws = temporal.shape
    rad = params.neighborhood
    num = np.zeros((hs, ws), dtype=np.float64)
    den = np.zeros((hs, ws), dtype=np.float64)
    for dy in range(-rad, rad + 1):
        for dx in range(-rad, rad + 1):
            w = np.exp(-(dy * dy + dx * dx) / (2.0 * params.sigma ** 2))
            ys0, ys1 = max(0, -dy), min(hs, hs - dy)
            xs0, xs1 = max(0, -dx), min(ws, ws - dx)
            num[ys0:ys1, xs0:xs1] += w * temporal[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
            den[ys0:ys1, xs0:xs1] += w
    return num / den


def egcm_factors(r: float, rho: float) -> tuple[float, float]:
    """Scale factor r**(1/rho) and control factor (1-r)**(1/rho)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    inv = 1.0 / rho
    return float(r ** inv), float((1.0 - r) ** inv)


def scaled_softmax(scores: np.ndarray, scale: float) -> np.ndarray:
    """softmax(scores / scale) over all tokens, max-subtracted for stability."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    z = scores / scale
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def normalize_scores(scores: np.ndarray) -> np.ndarray:
    """Scale scores into [0, 1] by their maximum.

    Raw event scores are microsecond sums and would saturate the softmax;
    the adaptive temperature assumes O(1) score ranges. Ranking is preserved.
    """
    m = scores.max()
    if m > 0:
        return scores / m
    return scores


def make_mask(scores: np.ndarray, control: float) -> SparsificationMap:
    """Threshold softmax-normalized scores at alpha = control / N.

    Ties keep the token (>= comparison), so control <= 1 never yields an
    empty mask: the max score is at least 1/N.
    """
    n = scores.size
    alpha = control / n
    return SparsificationMap(scores >= alpha)


def make_mask_topk(scores: np.ndarray, k: int) -> SparsificationMap:
    """Fixed-budget baseline: keep the k highest-scoring tokens.

    Ties are broken by row-major token index. Used to contrast the adaptive
    threshold with a fixed kept rate.
    """
    flat = scores.reshape(-1)
    k = int(min(max(k, 0), flat.size))
    bits = np.zeros(flat.size, dtype=bool)
    if k > 0:
        # stable sort on (-score, index)
        order = np.argsort(-flat, kind="stable")
        bits[order[:k]] = True
    return SparsificationMap(bits.reshape(scores.shape))


def egms_stage(image_grid: TokenGrid, event_grid: TokenGrid, stream: EventStream,
               stage: StageConfig, params: EGCMParams, r: float | None = None,
               stage1_override: bool = True) -> tuple[SparsificationMap, SparsificationMap]:
    """Produce the per-modality sparsification maps for one stage.

    At stage 1 the image modality reuses the event map (early-layer L2
    responses concentrate on edges); the override is toggleable.
    """
    if (image_grid.hs, image_grid.ws) != (event_grid.hs, event_grid.ws):
        raise ShapeMismatchError(
            f"image grid {image_grid.hs}x{image_grid.ws} vs "
            f"event grid {event_grid.hs}x{event_grid.ws}")
    if r is None:
        r = event_spatial_ratio(stream, params.epsilon_r)
    scale, control = egcm_factors(r, params.rho)

    temporal = score_event_temporal(stream, stage.stride, (event_grid.hs, event_grid.ws))
    s_event = score_event_spatiotemporal(temporal, params)
    s_event = scaled_softmax(normalize_scores(s_event), scale)
    m_event = make_mask(s_event, control)

    if stage.stage_index == 1 and stage1_override:
        m_image = SparsificationMap(m_event.bits.copy())
    else:
        s_image = score_image_l2(image_grid)
        s_image = scaled_softmax(normalize_scores(s_image), scale)
        m_image = make_mask(s_image, control)
    return m_image, m_event
