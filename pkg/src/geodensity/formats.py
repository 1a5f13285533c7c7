"""DMAP rasters and the JSON documents exchanged by the CLI.

DMAP layout (little-endian)::

    offset  size  field
    0       4     magic b"DMAP"
    4       1     version (1)
    5       1     plane tag (0 image, 1 head)
    6       2     reserved (0)
    8       4     cols (u32)
    12      4     rows (u32)
    16      8     cell size (f64; metres for head plane, 1.0 for image plane)
    24      8     origin x (f64)
    32      8     origin y (f64)
    40      ...   rows * cols f32 values, row-major
"""

import json
import struct
from pathlib import Path

import numpy as np

from .density import HEAD, IMAGE, AnnotationSet, DensityMap, HeadPlaneGrid
from .errors import DmapFormatError, InputError, PlaneMismatch
from .geometry import ScaleMap

MAGIC = b"DMAP"
VERSION = 1
HEADER = struct.Struct("<4sBBHIIddd")
PLANE_TAGS = {IMAGE: 0, HEAD: 1}
TAG_PLANES = {v: k for k, v in PLANE_TAGS.items()}


def encode_dmap(values, plane, cell_size=1.0, origin=(0.0, 0.0)):
    v = np.asarray(values)
    if v.ndim != 2:
        raise DmapFormatError("DMAP payload must be 2D")
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(v, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise DmapFormatError("DMAP values must be finite")
    rows, cols = payload.shape
    header = HEADER.pack(MAGIC, VERSION, PLANE_TAGS[plane], 0, cols, rows,
                         float(cell_size), float(origin[0]), float(origin[1]))
    return header + payload.tobytes()


def decode_dmap(data):
    """Parse DMAP bytes into ``(values float32, plane, cell_size, origin)``."""
    if len(data) < HEADER.size:
        raise DmapFormatError("truncated DMAP header")
    magic, version, tag, reserved, cols, rows, cell, ox, oy = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DmapFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DmapFormatError(f"unsupported DMAP version {version}")
    if tag not in TAG_PLANES:
        raise DmapFormatError(f"bad plane tag {tag}")
    if reserved != 0:
        raise DmapFormatError("reserved header field must be zero")
    expected = rows * cols * 4
    if len(data) - HEADER.size != expected:
        raise DmapFormatError(f"payload is {len(data) - HEADER.size} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(rows, cols)
    if not np.all(np.isfinite(values)):
        raise DmapFormatError("DMAP payload holds non-finite values")
    return values.astype(np.float32), TAG_PLANES[tag], cell, (ox, oy)


def quantize(d):
    """The map as it will read back from DMAP (values rounded to float32)."""
    if isinstance(d, ScaleMap):
        return ScaleMap(d.values.astype(np.float32).astype(np.float64), d.valid)
    return DensityMap(d.values.astype(np.float32).astype(np.float64), d.plane, d.cell_size, d.origin)


def write_dmap(path, d):
    """Write a DensityMap or ScaleMap (image plane; invalid pixels stored as 0)."""
    if isinstance(d, ScaleMap):
        data = encode_dmap(d.values, IMAGE)
    else:
        data = encode_dmap(d.values, d.plane, d.cell_size, d.origin)
    Path(path).write_bytes(data)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def read_dmap(path):
    values, plane, cell, origin = decode_dmap(_read_bytes(path))
    try:
        return DensityMap(values, plane, cell, origin)
    except ValueError as exc:
        raise DmapFormatError(f"{path}: {exc}") from None


def read_scale_map(path):
    values, plane, _, _ = decode_dmap(_read_bytes(path))
    if plane != IMAGE:
        raise PlaneMismatch(f"{path}: a scale map must be image-plane tagged")
    v = values.astype(np.float64)
    if np.any(v < 0):
        raise DmapFormatError(f"{path}: negative scale values")
    return ScaleMap(v, v > 0)


def load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        # JSON lines fallback: one object per line
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) > 1:
            try:
                return [json.loads(ln) for ln in lines]
            except json.JSONDecodeError:
                pass
        raise InputError(f"{path}: malformed JSON ({exc})") from None


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_telemetry(path):
    """Telemetry file (one object, a list, or JSON lines) as ``{frame: record}``."""
    doc = load_json(path)
    records = doc if isinstance(doc, list) else [doc]
    out = {}
    for rec in records:
        try:
            frame = int(rec["frame"])
            float(rec["altitude_m"])
            float(rec["pitch_rad"])
            for key in ("fx", "fy", "cx", "cy", "width", "height"):
                float(rec["intrinsics"][key])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: malformed telemetry record ({exc!r})") from None
        out[frame] = rec
    return out


def telemetry_frame(path, frame):
    records = load_telemetry(path)
    if frame not in records:
        raise InputError(f"{path}: no telemetry for frame {frame}")
    return records[frame]


def load_annotations(path):
    doc = load_json(path)
    try:
        return AnnotationSet.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed annotations ({exc!r})") from None


def load_grid(path):
    doc = load_json(path)
    try:
        return HeadPlaneGrid.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed grid ({exc!r})") from None
