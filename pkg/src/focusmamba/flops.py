"""Analytic operation counts for the pipeline, dense vs sparse.

Counts are multiply-accumulates (MACs); the conventional FLOP figure is
2 x MACs and the JSON report states this. Components whose cost is linear
in the number of processed tokens (scan, block projections, MLPs, fusion
scan/MLP) shrink with the kept counts; patch embedding/merging and the
fusion preprocessing always run on the full grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

TOKEN_DEPENDENT = ("vss_proj", "vss_scan", "mlp", "fusion_scan", "fusion_mlp")


@dataclass(frozen=True)
class FlopEntry:
    stage: int
    component: str
    dense_macs: int
    sparse_macs: int

    @property
    def reduction_pct(self) -> float:
        if self.dense_macs == 0:
            return 0.0
        return 100.0 * (1.0 - self.sparse_macs / self.dense_macs)


@dataclass
class FlopReport:
    entries: list[FlopEntry] = field(default_factory=list)

    def add(self, stage, component, dense, sparse):
        self.entries.append(FlopEntry(stage, component, int(dense), int(sparse)))

    def _total(self, sparse: bool, only_token_dependent: bool = False) -> int:
        return sum(
            (e.sparse_macs if sparse else e.dense_macs)
            for e in self.entries
            if not only_token_dependent or e.component in TOKEN_DEPENDENT)

    @property
    def dense_total(self) -> int:
        return self._total(False)

    @property
    def sparse_total(self) -> int:
        return self._total(True)

    @property
    def reduction_pct(self) -> float:
        dense = self.dense_total
        return 0.0 if dense == 0 else 100.0 * (1.0 - self.sparse_total / dense)

    @property
    def token_dependent_reduction_pct(self) -> float:
        dense = self._total(False, True)
        if dense == 0:
            return 0.0
        return 100.0 * (1.0 - self._total(True, True) / dense)

    def to_dict(self) -> dict:
        return {
            "convention": "counts are MACs; FLOPs = 2 x MACs",
            "entries": [
                {
                    "stage": e.stage,
                    "component": e.component,
                    "dense_macs": e.dense_macs,
                    "sparse_macs": e.sparse_macs,
                    "reduction_pct": round(e.reduction_pct, 6),
                }
                for e in self.entries
            ],
            "totals": {
                "dense_macs": self.dense_total,
                "sparse_macs": self.sparse_total,
                "reduction_pct": round(self.reduction_pct, 6),
            },
            "token_dependent": {
                "dense_macs": self._total(False, True),
                "sparse_macs": self._total(True, True),
                "reduction_pct": round(self.token_dependent_reduction_pct, 6),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def scan_macs_per_token(channels: int, state_dim: int) -> int:
    """One scan direction: decay, drive, recurrence, readout, skip."""
    return 6 * channels * state_dim + channels


def ssm_proj_macs_per_token(channels: int, state_dim: int) -> int:
    """One scan direction's B/C/delta projections."""
    return 2 * channels * state_dim + channels * channels


def count_flops(config, stage_masks) -> FlopReport:
    """Analytic report for one pipeline run.

    config is a ModelConfig; stage_masks is a list of four
    (image_mask, event_mask) pairs as produced by the backbone.
    """
    report = FlopReport()
    ds = config.state_dim
    prev_c = None
    for s, stage in enumerate(config.stage_configs(), start=1):
        c = stage.channels
        hs = config.height // stage.stride
        ws = config.width // stage.stride
        n = hs * ws
        m_i, m_e = stage_masks[s - 1]
        n_i, n_e = m_i.kept_count, m_e.kept_count
        hidden = c * config.hidden_ratio

        if s == 1:
            embed = n * (3 * stage.stride ** 2 * c) + n * (config.voxel_bins * stage.stride ** 2 * c)
        else:
            embed = 2 * n * (4 * prev_c * c)
        report.add(s, "embed", embed, embed)

        proj_per_tok = 3 * c * c + 2 * ssm_proj_macs_per_token(c, ds)
        scan_per_tok = 2 * scan_macs_per_token(c, ds)
        mlp_per_tok = 2 * c * hidden
        bc = stage.block_count
        report.add(s, "vss_proj", bc * 2 * n * proj_per_tok,
                   bc * (n_i + n_e) * proj_per_tok)
        report.add(s, "vss_scan", bc * 2 * n * scan_per_tok,
                   bc * (n_i + n_e) * scan_per_tok)
        report.add(s, "mlp", bc * 2 * n * mlp_per_tok,
                   bc * (n_i + n_e) * mlp_per_tok)

        if s >= 2:
            n_u = int((m_i.bits | m_e.bits).sum())
            pre = 2 * (n * c * c + n * 9 * c)
            report.add(s, "fusion_pre", pre, pre)
            fus_per_tok = ssm_proj_macs_per_token(c, ds) * 2 + scan_per_tok
            report.add(s, "fusion_scan", 2 * n * fus_per_tok, 2 * n_u * fus_per_tok)
            report.add(s, "fusion_mlp", n * mlp_per_tok, n_u * mlp_per_tok)
        prev_c = c
    return report
