"""Command-line interface: voxelize, sparsify, run, synth.

Seed precedence is flag > FOCUS_SEED environment variable > config file >
config default. Every command exits 0 on success and nonzero with a single
`error: ...` line on stderr otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import formats
from .errors import FocusMambaError
from .events import SensorGeometry, event_spatial_ratio, voxelize
from .pipeline import ModelConfig, init_weights, run_backbone
from .synth import COMPLEXITIES, synth_scene


def _load_config(path: str | None) -> ModelConfig:
    if path is None:
        return ModelConfig()
    return formats.parse_config(Path(path).read_text())


def _resolve_seed(flag_seed: int | None, config: ModelConfig) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("FOCUS_SEED")
    if env is not None:
        return int(env)
    return config.seed


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write(out_dir: Path, name: str, data: bytes, artifacts: dict) -> None:
    (out_dir / name).write_bytes(data)
    artifacts[name] = _sha256(data)


def cmd_voxelize(args) -> int:
    data_path = Path(args.events)
    # window bounds default to [0, max timestamp] when not given
    if args.t1 is None:
        raw = (formats.parse_events_evt1(data_path.read_bytes())
               if data_path.read_bytes()[:4] == formats.EVT1_MAGIC
               else formats.parse_events_csv(data_path.read_text()))
        t1 = max((t for _, _, t, _ in raw), default=1)
    else:
        t1 = args.t1
    geometry = SensorGeometry(args.width, args.height, args.t0, max(t1, args.t0 + 1))
    stream = formats.load_events(data_path, geometry)
    grid = voxelize(stream, args.bins)
    Path(args.out).write_bytes(formats.write_voxel(grid))
    r = event_spatial_ratio(stream)
    print(f"events={len(stream)} bins={args.bins} r={r:.6f} out={args.out}")
    return 0


def cmd_sparsify(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    image = formats.read_image(args.image)
    _, h, w = image.shape
    config = config.with_(height=h, width=w, seed=seed)
    geometry = SensorGeometry(w, h, args.t0, args.t1)
    stream = formats.load_events(args.events, geometry)
    weights = init_weights(config)
    outputs, _ = run_backbone(image, stream, config, weights)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    summary = []
    for st in outputs:
        for modality, mask in (("image", st.mask_image), ("event", st.mask_event)):
            name = f"mask_stage{st.stage_index}_{modality}.pgm"
            _write(out_dir, name, formats.write_mask_pgm(mask), artifacts)
            summary.append({
                "stage": st.stage_index,
                "modality": modality,
                "kept_ratio": round(mask.kept_ratio, 6),
                "r": round(st.r, 6),
            })
    _write(out_dir, "kept_ratios.json",
           json.dumps(summary, indent=2, sort_keys=True).encode(), artifacts)
    print(f"wrote {len(artifacts)} artifacts to {out_dir}")
    return 0


def cmd_run(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    image = formats.read_image(args.image)
    _, h, w = image.shape
    config = config.with_(height=h, width=w, seed=seed)
    geometry = SensorGeometry(w, h, args.t0, args.t1)
    stream = formats.load_events(args.events, geometry)
    weights = init_weights(config)
    outputs, report = run_backbone(image, stream, config, weights)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for st in outputs:
        _write(out_dir, f"image_stage{st.stage_index}.bin",
               formats.write_token_grid(st.image_grid), artifacts)
        _write(out_dir, f"event_stage{st.stage_index}.bin",
               formats.write_token_grid(st.event_grid), artifacts)
        if st.fused is not None:
            _write(out_dir, f"fused_stage{st.stage_index}.bin",
                   formats.write_token_grid(st.fused), artifacts)
        _write(out_dir, f"mask_stage{st.stage_index}_image.pgm",
               formats.write_mask_pgm(st.mask_image), artifacts)
        _write(out_dir, f"mask_stage{st.stage_index}_event.pgm",
               formats.write_mask_pgm(st.mask_event), artifacts)

    report_dict = report.to_dict()
    if args.dense_baseline:
        _, dense_report = run_backbone(image, stream, config.with_(sparsify=False),
                                       weights)
        baseline = dense_report.sparse_total
        ours = report.sparse_total
        report_dict["dense_baseline"] = {
            "baseline_macs": baseline,
            "sparse_macs": ours,
            "reduction_pct": round(100.0 * (1.0 - ours / baseline), 6) if baseline else 0.0,
        }
    _write(out_dir, "flop_report.json",
           json.dumps(report_dict, indent=2, sort_keys=True).encode(), artifacts)

    manifest = {
        "inputs": {
            "image": str(args.image),
            "events": str(args.events),
            "config": str(args.config) if args.config else None,
        },
        "seed": seed,
        "config_text": formats.render_config(config),
        "artifacts": artifacts,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))
    print(f"r={outputs[0].r:.6f} "
          f"token_dependent_reduction_pct={report.token_dependent_reduction_pct:.2f}")
    return 0


def cmd_synth(args) -> int:
    scene = synth_scene(args.seed, args.complexity, args.height, args.width)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "image.ppm").write_bytes(formats.write_ppm(scene.image))
    (out_dir / "events.csv").write_text(formats.write_events_csv(scene.stream))
    (out_dir / "events.evt1").write_bytes(formats.write_events_evt1(scene.stream))
    (out_dir / "object_mask.pgm").write_bytes(
        formats.write_pgm(scene.object_mask.astype("u1") * 255))
    r = event_spatial_ratio(scene.stream)
    print(f"events={len(scene.stream)} r={r:.6f} out={out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focusmamba",
        description="Event-guided token sparsification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="convert an event file to a voxel tensor")
    p.add_argument("events")
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--t0", type=int, default=0)
    p.add_argument("--t1", type=int, default=None)
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("sparsify", help="emit per-stage sparsification masks")
    p.add_argument("image")
    p.add_argument("events")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t0", type=int, default=0)
    p.add_argument("--t1", type=int, default=50_000)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("image")
    p.add_argument("events")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t0", type=int, default=0)
    p.add_argument("--t1", type=int, default=50_000)
    p.add_argument("--dense-baseline", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--complexity", choices=COMPLEXITIES, default="medium")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FocusMambaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
