"""Readers and writers for the on-disk formats the CLI speaks.

PFM (little-endian, bottom-up rows), binary PGM masks, 8-bit PNG previews,
Radiance RGBE panoramas, binary little-endian PLY clouds with optional pixel
provenance, the GRLT raw-tensor blob, and JSON reports validated against the
shipped schemas.
"""

from __future__ import annotations

import json
import math
import struct
from importlib import resources

import numpy as np
from PIL import Image

from .errors import FileFormatError, ValidationError

# ---------------------------------------------------------------------------
# PFM

def write_pfm(path, data: np.ndarray) -> None:
    """Single- or three-channel float map; rows stored bottom-up."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValidationError(f"PFM supports (H, W) or (H, W, 3), got shape {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FileFormatError(f"{path}: not a PFM file (magic {magic!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FileFormatError(f"{path}: malformed PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        buf = f.read(count * 4)
        if len(buf) != count * 4:
            raise FileFormatError(f"{path}: truncated PFM payload")
    data = np.frombuffer(buf, dtype=dtype).astype(np.float32)
    data = data.reshape(h, w) if channels == 1 else data.reshape(h, w, 3)
    return np.flipud(data).copy()


# ---------------------------------------------------------------------------
# PGM masks

def write_pgm_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write((mask.astype(np.uint8) * 255).tobytes())


def read_pgm_mask(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P5"):
        raise FileFormatError(f"{path}: not a binary PGM file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = int(tokens[0]), int(tokens[1]), int(tokens[2])
    except ValueError:
        raise FileFormatError(f"{path}: malformed PGM header") from None
    if maxval > 255:
        raise FileFormatError(f"{path}: only 8-bit PGM supported")
    payload = raw[pos:pos + w * h]
    if len(payload) != w * h:
        raise FileFormatError(f"{path}: truncated PGM payload")
    return (np.frombuffer(payload, dtype=np.uint8).reshape(h, w) > 0).copy()


# ---------------------------------------------------------------------------
# PNG (8-bit previews of [0, 1] maps)

def write_png(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float64)
    u8 = np.clip(np.round(data * 255.0), 0, 255).astype(np.uint8)
    if u8.ndim == 2:
        Image.fromarray(u8, mode="L").save(path)
    elif u8.ndim == 3 and u8.shape[2] == 3:
        Image.fromarray(u8, mode="RGB").save(path)
    else:
        raise ValidationError(f"PNG preview supports (H, W) or (H, W, 3), got {data.shape}")


# ---------------------------------------------------------------------------
# Radiance RGBE

def _float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    h, w, _ = rgb.shape
    out = np.zeros((h, w, 4), dtype=np.uint8)
    maxc = rgb.max(axis=2)
    nonzero = maxc >= 1e-32
    mantissa, exponent = np.frexp(maxc[nonzero])
    scale = mantissa * 256.0 / maxc[nonzero]
    out_nz = np.empty((nonzero.sum(), 4), dtype=np.uint8)
    for c in range(3):
        out_nz[:, c] = np.clip(rgb[nonzero, c] * scale, 0, 255).astype(np.uint8)
    out_nz[:, 3] = (exponent + 128).astype(np.uint8)
    out[nonzero] = out_nz
    return out


def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    exp = rgbe[..., 3].astype(np.int32)
    scale = np.where(exp == 0, 0.0, np.ldexp(1.0, exp - 136))
    return rgbe[..., :3].astype(np.float32) * scale[..., None].astype(np.float32)


def write_hdr(path, radiance: np.ndarray) -> None:
    """Radiance RGBE with flat (uncompressed) scanlines."""
    radiance = np.asarray(radiance, dtype=np.float32)
    if radiance.ndim != 3 or radiance.shape[2] != 3:
        raise ValidationError(f"HDR writer needs (H, W, 3), got shape {radiance.shape}")
    h, w = radiance.shape[:2]
    rgbe = _float_to_rgbe(radiance)
    with open(path, "wb") as f:
        f.write(b"#?RADIANCE\n")
        f.write(b"FORMAT=32-bit_rle_rgbe\n\n")
        f.write(f"-Y {h} +X {w}\n".encode())
        f.write(rgbe.tobytes())


def _read_rle_scanline(f, width: int, path) -> np.ndarray:
    head = f.read(4)
    if len(head) != 4:
        raise FileFormatError(f"{path}: truncated HDR scanline")
    if not (head[0] == 2 and head[1] == 2 and head[2] < 128):
        # flat scanline: the 4 bytes already read are the first pixel
        rest = f.read(4 * (width - 1))
        if len(rest) != 4 * (width - 1):
            raise FileFormatError(f"{path}: truncated HDR scanline")
        return np.frombuffer(head + rest, dtype=np.uint8).reshape(width, 4)
    if (head[2] << 8 | head[3]) != width:
        raise FileFormatError(f"{path}: HDR scanline width mismatch")
    line = np.empty((width, 4), dtype=np.uint8)
    for c in range(4):
        filled = 0
        while filled < width:
            code = f.read(1)
            if not code:
                raise FileFormatError(f"{path}: truncated HDR RLE stream")
            n = code[0]
            if n > 128:  # run
                val = f.read(1)
                if not val:
                    raise FileFormatError(f"{path}: truncated HDR RLE run")
                line[filled:filled + n - 128, c] = val[0]
                filled += n - 128
            else:  # literals
                lit = f.read(n)
                if len(lit) != n:
                    raise FileFormatError(f"{path}: truncated HDR RLE literals")
                line[filled:filled + n, c] = np.frombuffer(lit, dtype=np.uint8)
                filled += n
        if filled != width:
            raise FileFormatError(f"{path}: HDR RLE overrun")
    return line


def read_hdr(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline()
        if not magic.startswith(b"#?"):
            raise FileFormatError(f"{path}: not a Radiance HDR file")
        fmt_ok = False
        while True:
            line = f.readline()
            if not line:
                raise FileFormatError(f"{path}: unterminated HDR header")
            if line.strip() == b"":
                break
            if line.strip() == b"FORMAT=32-bit_rle_rgbe":
                fmt_ok = True
        if not fmt_ok:
            raise FileFormatError(f"{path}: unsupported HDR pixel format")
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise FileFormatError(f"{path}: unsupported HDR orientation {res!r}")
        h, w = int(res[1]), int(res[3])
        rows = [_read_rle_scanline(f, w, path) for _ in range(h)]
    return _rgbe_to_float(np.stack(rows, axis=0))


# ---------------------------------------------------------------------------
# PLY point clouds

def write_ply(path, points: np.ndarray, pixel_index=None) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    n = len(points)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    if pixel_index is not None:
        pixel_index = np.asarray(pixel_index, dtype=np.uint32).reshape(-1, 2)
        if len(pixel_index) != n:
            raise ValidationError("pixel_index length does not match point count")
        header += ["property uint u", "property uint v"]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        if pixel_index is None:
            f.write(points.astype("<f4").tobytes())
        else:
            rec = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                     ("u", "<u4"), ("v", "<u4")])
            rec["x"], rec["y"], rec["z"] = points[:, 0], points[:, 1], points[:, 2]
            rec["u"], rec["v"] = pixel_index[:, 0], pixel_index[:, 1]
            f.write(rec.tobytes())


_PLY_TYPES = {"float": "<f4", "float32": "<f4", "uint": "<u4", "uint32": "<u4"}


def read_ply(path):
    """Returns (points (N, 3) float, pixel_index (N, 2) or None)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise FileFormatError(f"{path}: not a PLY file")
        n = None
        props = []
        while True:
            line = f.readline()
            if not line:
                raise FileFormatError(f"{path}: unterminated PLY header")
            parts = line.decode("ascii", "replace").strip().split()
            if not parts:
                continue
            if parts[0] == "format":
                if parts[1] != "binary_little_endian":
                    raise FileFormatError(f"{path}: only binary_little_endian PLY supported")
            elif parts[0] == "element":
                if parts[1] != "vertex":
                    raise FileFormatError(f"{path}: only vertex elements supported")
                n = int(parts[2])
            elif parts[0] == "property":
                if parts[1] not in _PLY_TYPES:
                    raise FileFormatError(f"{path}: unsupported property type {parts[1]!r}")
                props.append((parts[2], _PLY_TYPES[parts[1]]))
            elif parts[0] == "end_header":
                break
        if n is None:
            raise FileFormatError(f"{path}: PLY header missing vertex element")
        names = [p[0] for p in props]
        if names[:3] != ["x", "y", "z"]:
            raise FileFormatError(f"{path}: PLY must start with float x, y, z properties")
        rec = np.frombuffer(f.read(n * sum(4 for _ in props)), dtype=props, count=n)
    points = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    pixel_index = None
    if "u" in names and "v" in names:
        pixel_index = np.column_stack([rec["u"], rec["v"]]).astype(np.int64)
    return points, pixel_index


# ---------------------------------------------------------------------------
# GRLT raw tensors

_GRLT_MAGIC = b"GRLT"


def write_grlt(path, tensor: np.ndarray) -> None:
    tensor = np.asarray(tensor, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(_GRLT_MAGIC)
        f.write(struct.pack("<I", tensor.ndim))
        f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        f.write(tensor.astype("<f4").tobytes())


def read_grlt(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _GRLT_MAGIC:
            raise FileFormatError(f"{path}: not a GRLT tensor file")
        (rank,) = struct.unpack("<I", f.read(4))
        if rank == 0 or rank > 8:
            raise FileFormatError(f"{path}: implausible tensor rank {rank}")
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        count = int(np.prod(dims))
        buf = f.read(count * 4)
        if len(buf) != count * 4:
            raise FileFormatError(f"{path}: truncated GRLT payload")
    return np.frombuffer(buf, dtype="<f4").reshape(dims).copy()


# ---------------------------------------------------------------------------
# JSON helpers and schemas

def _sanitize(obj):
    """Make report payloads strict-JSON safe (inf -> the string 'inf')."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(_sanitize(payload), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def read_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: invalid JSON ({e})") from None


def dumps_result_line(payload: dict) -> str:
    return json.dumps(_sanitize(payload), sort_keys=True, allow_nan=False)


def load_schema(name: str) -> dict:
    ref = resources.files("relightkit").joinpath("schemas", f"{name}.json")
    return json.loads(ref.read_text())


def validate_against_schema(payload: dict, schema_name: str) -> None:
    import jsonschema

    try:
        jsonschema.validate(instance=_sanitize(payload), schema=load_schema(schema_name))
    except jsonschema.ValidationError as e:
        raise ValidationError(f"payload fails schema {schema_name!r}: {e.message}") from None


# ---------------------------------------------------------------------------
# Manifest

MANIFEST_SCHEMA_VERSION = 1


def load_manifest(path) -> dict:
    manifest = read_json(path)
    validate_against_schema(manifest, "manifest")
    if manifest["schema_version"] != MANIFEST_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported manifest schema_version {manifest['schema_version']}"
        )
    return manifest


def job_to_argv(job: dict) -> list:
    """Flatten a manifest job into CLI argv; dict keys are flag names."""
    argv = list(job["command"].split())
    for group in ("inputs", "outputs", "params"):
        for key, value in job.get(group, {}).items():
            argv.append(f"--{key}")
            if isinstance(value, (list, tuple)):
                argv.extend(str(v) for v in value)
            elif isinstance(value, bool):
                if not value:
                    argv.pop()
            else:
                argv.append(str(value))
    if job.get("seed") is not None:
        argv += ["--seed", str(job["seed"])]
    return argv
