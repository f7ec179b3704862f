"""File formats: event CSV/EVT1, raw tensor dumps, PGM/PPM images, config
text, and the named-section weight file.

All binary formats are little-endian.

  EVT1 events   magic "EVT1", u32 count, then per event u16 x, u16 y,
                u64 t, i8 p
  voxel dump    u16 bins, u16 height, u16 width, u16 reserved, then f32
                values in (bin, row, col) order
  token dump    u16 hs, u16 ws, u16 channels, u16 stride, then f32 values
                in (row, col, channel) order
  score dump    u32 length, then f64 values row-major
  weight file   magic "FMW1", u32 section count, then per section u16 name
                length, utf-8 name, u8 ndim, u32 dims, f64 data
"""

from __future__ import annotations

import struct
from dataclasses import fields

import numpy as np

from .egms import EGCMParams, SparsificationMap
from .errors import ParseError
from .events import EventStream, SensorGeometry, VoxelGrid, validate_stream
from .tokens import TokenGrid

EVT1_MAGIC = b"EVT1"
WEIGHTS_MAGIC = b"FMW1"


# ---------------------------------------------------------------- events

def parse_events_csv(text: str) -> list[tuple[int, int, int, int]]:
    """Parse `x,y,t,p` lines; a header row is allowed; p may use {0,1}
    with 0 meaning -1."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", line=lineno)
        try:
            x, y, t, p = (int(v) for v in parts)
        except ValueError:
            if lineno == 1 and not events:
                continue  # header row
            raise ParseError(f"non-integer field in {line!r}", line=lineno)
        if p == 0:
            p = -1
        events.append((x, y, t, p))
    return events


def write_events_csv(stream: EventStream) -> str:
    lines = ["x,y,t,p"]
    lines += [f"{x},{y},{t},{p}"
              for x, y, t, p in zip(stream.xs, stream.ys, stream.ts, stream.ps)]
    return "\n".join(lines) + "\n"


def write_events_evt1(stream: EventStream) -> bytes:
    out = [EVT1_MAGIC, struct.pack("<I", len(stream))]
    record = struct.Struct("<HHQb")
    for x, y, t, p in zip(stream.xs, stream.ys, stream.ts, stream.ps):
        out.append(record.pack(int(x), int(y), int(t), int(p)))
    return b"".join(out)


def parse_events_evt1(data: bytes) -> list[tuple[int, int, int, int]]:
    if data[:4] != EVT1_MAGIC:
        raise ParseError("bad magic, expected EVT1", offset=0)
    if len(data) < 8:
        raise ParseError("truncated header", offset=len(data))
    (count,) = struct.unpack_from("<I", data, 4)
    record = struct.Struct("<HHQb")
    expected = 8 + count * record.size
    if len(data) < expected:
        raise ParseError(f"truncated: need {expected} bytes, have {len(data)}",
                         offset=len(data))
    events = []
    off = 8
    for _ in range(count):
        x, y, t, p = record.unpack_from(data, off)
        events.append((x, y, int(t), p))
        off += record.size
    return events


def load_events(path, geometry: SensorGeometry) -> EventStream:
    """Read CSV or EVT1 by sniffing the magic bytes."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] == EVT1_MAGIC:
        raw = parse_events_evt1(data)
    else:
        raw = parse_events_csv(data.decode("utf-8"))
    return validate_stream(raw, geometry)


# ----------------------------------------------------------- raw tensors

def write_voxel(grid: VoxelGrid) -> bytes:
    header = struct.pack("<HHHH", grid.bins, grid.height, grid.width, 0)
    return header + grid.values.astype("<f4").tobytes()


def read_voxel(data: bytes) -> VoxelGrid:
    if len(data) < 8:
        raise ParseError("truncated voxel header", offset=len(data))
    b, h, w, _ = struct.unpack_from("<HHHH", data, 0)
    body = np.frombuffer(data, dtype="<f4", offset=8)
    if body.size != b * h * w:
        raise ParseError(f"expected {b * h * w} values, found {body.size}", offset=8)
    return VoxelGrid(body.reshape(b, h, w).astype(np.float64))


def write_token_grid(grid: TokenGrid) -> bytes:
    header = struct.pack("<HHHH", grid.hs, grid.ws, grid.channels, grid.stage_stride)
    return header + grid.features.astype("<f4").tobytes()


def read_token_grid(data: bytes) -> TokenGrid:
    if len(data) < 8:
        raise ParseError("truncated token-grid header", offset=len(data))
    hs, ws, c, stride = struct.unpack_from("<HHHH", data, 0)
    body = np.frombuffer(data, dtype="<f4", offset=8)
    if body.size != hs * ws * c:
        raise ParseError(f"expected {hs * ws * c} values, found {body.size}", offset=8)
    return TokenGrid(body.reshape(hs, ws, c).astype(np.float64), stride)


def write_scores(scores: np.ndarray) -> bytes:
    flat = np.asarray(scores, dtype="<f8").reshape(-1)
    return struct.pack("<I", flat.size) + flat.tobytes()


def read_scores(data: bytes) -> np.ndarray:
    (n,) = struct.unpack_from("<I", data, 0)
    body = np.frombuffer(data, dtype="<f8", offset=4)
    if body.size != n:
        raise ParseError(f"expected {n} values, found {body.size}", offset=4)
    return body.copy()


# ------------------------------------------------------------- PGM / PPM

def _read_pnm_tokens(data: bytes, count: int):
    """Header tokens, skipping whitespace and # comments; returns tokens
    and the offset one whitespace byte past the last one."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ParseError("truncated header", offset=i)
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1


def read_pnm(data: bytes) -> np.ndarray:
    """P5 -> (H, W) uint8; P6 -> (3, H, W) uint8."""
    tokens, off = _read_pnm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported format {magic!r}", offset=0)
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ParseError("non-integer header field", offset=off)
    if maxval != 255:
        raise ParseError(f"only maxval 255 supported, got {maxval}", offset=off)
    channels = 3 if magic == b"P6" else 1
    body = np.frombuffer(data, dtype=np.uint8, offset=off, count=w * h * channels)
    if body.size != w * h * channels:
        raise ParseError("truncated pixel data", offset=off)
    if channels == 1:
        return body.reshape(h, w).copy()
    return body.reshape(h, w, 3).transpose(2, 0, 1).copy()


def write_pgm(values: np.ndarray) -> bytes:
    h, w = values.shape
    return b"P5\n%d %d\n255\n" % (w, h) + values.astype(np.uint8).tobytes()


def write_ppm(image: np.ndarray) -> bytes:
    """(3, H, W) floats in [0, 1] or uint8."""
    if image.dtype != np.uint8:
        image = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    _, h, w = image.shape
    return b"P6\n%d %d\n255\n" % (w, h) + image.transpose(1, 2, 0).tobytes()


def read_image(path) -> np.ndarray:
    """PPM/PGM file to (3, H, W) float64 in [0, 1]; grayscale is replicated."""
    with open(path, "rb") as f:
        arr = read_pnm(f.read())
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr])
    return arr.astype(np.float64) / 255.0


def write_mask_pgm(mask: SparsificationMap) -> bytes:
    """Kept tokens white (255), dropped black (0)."""
    return write_pgm(np.where(mask.bits, 255, 0))


def read_mask_pgm(data: bytes) -> SparsificationMap:
    arr = read_pnm(data)
    if arr.ndim != 2:
        raise ParseError("mask must be a P5 image", offset=0)
    return SparsificationMap(arr > 127)


# ----------------------------------------------------------- config file

_CONFIG_KEYS = ("height", "width", "channels", "blocks", "state_dim",
                "hidden_ratio", "voxel_bins", "rho", "sigma", "neighborhood",
                "epsilon_r", "beta", "seed", "stage1_override", "sparsify")


def parse_config(text: str):
    """`key = value` lines; unknown keys are an error; missing keys keep
    their defaults."""
    from .pipeline import ModelConfig

    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", line=lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        values[key] = val

    def _ints(v):
        return tuple(int(x) for x in v.split(","))

    def _bool(v):
        if v.lower() in ("true", "1", "yes", "on"):
            return True
        if v.lower() in ("false", "0", "no", "off"):
            return False
        raise ParseError(f"bad boolean {v!r}")

    kwargs = {}
    for key in ("height", "width", "state_dim", "hidden_ratio", "voxel_bins", "seed"):
        if key in values:
            kwargs[key] = int(values[key])
    for key in ("channels", "blocks"):
        if key in values:
            kwargs[key] = _ints(values[key])
    if "beta" in values:
        kwargs["beta"] = float(values["beta"])
    for key in ("stage1_override", "sparsify"):
        if key in values:
            kwargs[key] = _bool(values[key])
    egcm_kwargs = {}
    for key, name in (("rho", "rho"), ("sigma", "sigma"), ("epsilon_r", "epsilon_r")):
        if key in values:
            egcm_kwargs[name] = float(values[key])
    if "neighborhood" in values:
        egcm_kwargs["neighborhood"] = int(values["neighborhood"])
    if egcm_kwargs:
        kwargs["egcm"] = EGCMParams(**egcm_kwargs)
    return ModelConfig(**kwargs)


def render_config(config) -> str:
    lines = [
        f"height = {config.height}",
        f"width = {config.width}",
        "channels = " + ",".join(str(c) for c in config.channels),
        "blocks = " + ",".join(str(b) for b in config.blocks),
        f"state_dim = {config.state_dim}",
        f"hidden_ratio = {config.hidden_ratio}",
        f"voxel_bins = {config.voxel_bins}",
        f"rho = {config.egcm.rho}",
        f"sigma = {config.egcm.sigma}",
        f"neighborhood = {config.egcm.neighborhood}",
        f"epsilon_r = {config.egcm.epsilon_r}",
        f"beta = {config.beta}",
        f"seed = {config.seed}",
        f"stage1_override = {str(config.stage1_override).lower()}",
        f"sparsify = {str(config.sparsify).lower()}",
    ]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ weight file

def write_sections(sections: dict[str, np.ndarray]) -> bytes:
    out = [WEIGHTS_MAGIC, struct.pack("<I", len(sections))]
    for name, arr in sections.items():
        arr = np.asarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        out.append(arr.astype("<f8").tobytes())
    return b"".join(out)


def read_sections(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != WEIGHTS_MAGIC:
        raise ParseError("bad magic, expected FMW1", offset=0)
    (count,) = struct.unpack_from("<I", data, 4)
    off = 8
    sections = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", offset=off, count=size)
        off += 8 * size
        sections[name] = arr.reshape(shape).astype(np.float64)
    return sections


def _ssm_sections(prefix, params):
    return {
        f"{prefix}.a": params.a,
        f"{prefix}.w_b": params.w_b,
        f"{prefix}.w_c": params.w_c,
        f"{prefix}.w_delta": params.w_delta,
        f"{prefix}.delta_bias": params.delta_bias,
        f"{prefix}.skip": params.skip,
    }


def _layer_sections(prefix, lw):
    out = {}
    for f in fields(lw):
        val = getattr(lw, f.name)
        if f.name in ("ssm_fwd", "ssm_bwd"):
            out.update(_ssm_sections(f"{prefix}.{f.name}", val))
        else:
            out[f"{prefix}.{f.name}"] = val
    return out


def weights_to_sections(weights) -> dict[str, np.ndarray]:
    """Flatten a PipelineWeights into named arrays for the weight file."""
    out = {}
    out["image_embed.w"], out["image_embed.b"] = weights.image_embed
    out["event_embed.w"], out["event_embed.b"] = weights.event_embed
    for i, (w, b) in enumerate(weights.image_merge):
        out[f"image_merge.{i}.w"], out[f"image_merge.{i}.b"] = w, b
    for i, (w, b) in enumerate(weights.event_merge):
        out[f"event_merge.{i}.w"], out[f"event_merge.{i}.b"] = w, b
    for s, blocks in enumerate(weights.image_blocks):
        for j, lw in enumerate(blocks):
            out.update(_layer_sections(f"image_blocks.{s}.{j}", lw))
    for s, blocks in enumerate(weights.event_blocks):
        for j, lw in enumerate(blocks):
            out.update(_layer_sections(f"event_blocks.{s}.{j}", lw))
    for s, fw in enumerate(weights.fusion):
        for f in fields(fw):
            val = getattr(fw, f.name)
            if f.name in ("ssm_fwd", "ssm_bwd"):
                out.update(_ssm_sections(f"fusion.{s}.{f.name}", val))
            elif f.name == "mlp":
                out.update(_layer_sections(f"fusion.{s}.mlp", val))
            else:
                out[f"fusion.{s}.{f.name}"] = val
    return out


def sections_to_weights(sections: dict[str, np.ndarray], config):
    """Rebuild a PipelineWeights from named arrays."""
    from .cmff import FusionWeights
    from .pipeline import PipelineWeights
    from .ssm import LayerWeights, SSMParams

    def ssm(prefix):
        return SSMParams(**{n: sections[f"{prefix}.{n}"]
                            for n in ("a", "w_b", "w_c", "w_delta", "delta_bias", "skip")})

    def layer(prefix):
        plain = ("norm_gain", "w_in", "w_gate", "w_out", "mlp_norm_gain",
                 "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")
        kwargs = {n: sections[f"{prefix}.{n}"] for n in plain}
        kwargs["ssm_fwd"] = ssm(f"{prefix}.ssm_fwd")
        kwargs["ssm_bwd"] = ssm(f"{prefix}.ssm_bwd")
        return LayerWeights(**kwargs)

    image_blocks = [[layer(f"image_blocks.{s}.{j}") for j in range(config.blocks[s])]
                    for s in range(4)]
    event_blocks = [[layer(f"event_blocks.{s}.{j}") for j in range(config.blocks[s])]
                    for s in range(4)]
    fusion = []
    for s in range(3):
        plain = ("pre_image", "pre_image_b", "dw_image",
                 "pre_event", "pre_event_b", "dw_event")
        kwargs = {n: sections[f"fusion.{s}.{n}"] for n in plain}
        kwargs["ssm_fwd"] = ssm(f"fusion.{s}.ssm_fwd")
        kwargs["ssm_bwd"] = ssm(f"fusion.{s}.ssm_bwd")
        kwargs["mlp"] = layer(f"fusion.{s}.mlp")
        fusion.append(FusionWeights(**kwargs))
    return PipelineWeights(
        image_embed=(sections["image_embed.w"], sections["image_embed.b"]),
        event_embed=(sections["event_embed.w"], sections["event_embed.b"]),
        image_merge=[(sections[f"image_merge.{i}.w"], sections[f"image_merge.{i}.b"])
                     for i in range(3)],
        event_merge=[(sections[f"event_merge.{i}.w"], sections[f"event_merge.{i}.b"])
                     for i in range(3)],
        image_blocks=image_blocks,
        event_blocks=event_blocks,
        fusion=fusion,
    )
