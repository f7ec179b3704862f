"""Event stream ingestion, voxelization, and the event spatial ratio.

Events are sparse (x, y, t, p) tuples from an event camera. A fixed time
window [window_start, window_end] defines one sample; voxelization bins the
window into B temporal slices with bilinear timestamp interpolation, so the
operation stays additive over disjoint sub-streams of the same window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BadPolarityError, OutOfBoundsError

# Floor on the event spatial ratio: the EGCM scale factor is r**(1/rho),
# which would be 0 for an empty window and break the softmax temperature.
EPSILON_R = 1e-4

DEFAULT_BINS = 5


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int  # microseconds
    p: int  # polarity, -1 or +1


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int
    window_start: int
    window_end: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")
        if self.window_start >= self.window_end:
            raise ValueError("window_start must precede window_end")


@dataclass(frozen=True)
class EventStream:
    """Time-sorted events inside one window, stored as parallel arrays."""

    xs: np.ndarray  # int64
    ys: np.ndarray
    ts: np.ndarray
    ps: np.ndarray
    geometry: SensorGeometry

    def __len__(self):
        return len(self.ts)

    def to_events(self) -> list[Event]:
        return [
            Event(int(x), int(y), int(t), int(p))
            for x, y, t, p in zip(self.xs, self.ys, self.ts, self.ps)
        ]


@dataclass(frozen=True)
class VoxelGrid:
    values: np.ndarray  # (bins, height, width) float64

    @property
    def bins(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


def validate_stream(raw_events: Iterable[Event | Sequence[int]],
                    geometry: SensorGeometry) -> EventStream:
    """Check bounds/polarity/window, sort by timestamp, and pack into arrays.

    Sorting is stable, so simultaneous events keep their input order.
    An empty input is legal and yields an empty stream.
    """
    xs, ys, ts, ps = [], [], [], []
    for i, ev in enumerate(raw_events):
        if isinstance(ev, Event):
            x, y, t, p = ev.x, ev.y, ev.t, ev.p
        else:
            x, y, t, p = ev
        if not (0 <= x < geometry.width and 0 <= y < geometry.height):
            raise OutOfBoundsError(i, f"({x}, {y}) outside {geometry.width}x{geometry.height}")
        if not (geometry.window_start <= t <= geometry.window_end):
            raise OutOfBoundsError(
                i, f"t={t} outside window [{geometry.window_start}, {geometry.window_end}]")
        if p not in (-1, 1):
            raise BadPolarityError(i, p)
        xs.append(x)
        ys.append(y)
        ts.append(t)
        ps.append(p)

    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    ts = np.asarray(ts, dtype=np.int64)
    ps = np.asarray(ps, dtype=np.int64)
    order = np.argsort(ts, kind="stable")
    return EventStream(xs[order], ys[order], ts[order], ps[order], geometry)


def voxelize(stream: EventStream, bins: int = DEFAULT_BINS) -> VoxelGrid:
    """Deposit each event bilinearly into B temporal bins at its pixel.

    Normalized timestamp t* = (t - t0) / (t1 - t0) * (B - 1); bin b receives
    p * max(0, 1 - |b - t*|). Normalization uses the window bounds, not the
    stream extrema, so voxelize(A) + voxelize(B) == voxelize(A ∪ B).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    geo = stream.geometry
    grid = np.zeros((bins, geo.height, geo.width), dtype=np.float64)
    if len(stream) == 0:
        return VoxelGrid(grid)

    span = geo.window_end - geo.window_start
    tstar = (stream.ts - geo.window_start) / span * (bins - 1)
    lo = np.floor(tstar).astype(np.int64)
    frac = tstar - lo
    p = stream.ps.astype(np.float64)

    flat = grid.reshape(bins, -1)
    pix = stream.ys * geo.width + stream.xs
    valid = (lo >= 0) & (lo < bins)
    np.add.at(flat, (lo[valid], pix[valid]), p[valid] * (1.0 - frac[valid]))
    hi = lo + 1
    valid = (hi >= 0) & (hi < bins)
    np.add.at(flat, (hi[valid], pix[valid]), p[valid] * frac[valid])
    return VoxelGrid(grid)


def event_spatial_ratio(stream: EventStream, epsilon_r: float = EPSILON_R) -> float:
    """Fraction of sensor pixels that triggered at least one event.

    Duplicate events at a pixel count once. Clamped to [epsilon_r, 1] so the
    downstream scale factor never becomes 0.
    """
    geo = stream.geometry
    total = geo.width * geo.height
    if len(stream) == 0:
        distinct = 0
    else:
        distinct = len(np.unique(stream.ys * geo.width + stream.xs))
    return float(min(max(distinct / total, epsilon_r), 1.0))
