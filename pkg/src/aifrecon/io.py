"""On-disk formats: frame bundles, volume files, sweep configs, slice images.

The byte-level layouts are documented in FORMATS.md at the repository
root. Writes go to a temporary file in the target directory and are
moved into place, so readers never see a half-written file.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from .geometry import FrameGeometry, RigidPose, VolumeMeta
from .recon import Frame, TrackedFrameSet
from .simulate import ArcSweep, HalfSpace, ReflectionParams, Sphere, SweepSpec, TwinRidge
from .volume import ScalarVolume, VectorVolume

__all__ = [
    "FormatError",
    "POSE_TOL",
    "MANIFEST_NAME",
    "save_bundle",
    "load_bundle",
    "save_volume",
    "load_volume",
    "load_sweep_config",
    "load_phantom_config",
    "slice_image",
    "write_pgm",
    "export_slice",
]

PathLike = Union[str, os.PathLike]

POSE_TOL = 1e-4
MANIFEST_NAME = "manifest.json"
BUNDLE_FORMAT = "aifrecon-bundle"
VOLUME_MAGIC = "AIFVOL 1"
ELEMENT_TYPES = {"u8": (np.dtype("u1"), 1), "f32": (np.dtype("<f4"), 1), "vec3f32": (np.dtype("<f4"), 3)}


class FormatError(ValueError):
    """A file exists but its content violates the format."""


def _atomic_write(path: PathLike, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text ({exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None


def _require(obj: Dict[str, Any], key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _no_extra(obj: Dict[str, Any], allowed, where: str) -> None:
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise FormatError(f"{where}: unknown field(s) {', '.join(extra)}")


# --- frame bundles ---------------------------------------------------------


def _frame_name(i: int) -> str:
    return f"frame_{i:04d}.raw"


def save_bundle(frames: TrackedFrameSet, path: PathLike) -> None:
    """Write ``frames`` as a manifest plus one raw 8-bit file per frame."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    g = frames.geom
    entries = []
    for i, fr in enumerate(frames.frames):
        img = np.asarray(fr.image)
        if img.dtype != np.uint8:
            if not np.all((img >= 0) & (img <= 255) & (img == np.round(img))):
                raise FormatError(f"frame {i}: pixel values must be integers in 0..255")
            img = img.astype(np.uint8)
        _atomic_write(root / _frame_name(i), np.ascontiguousarray(img).tobytes(order="C"))
        entries.append({"file": _frame_name(i), "pose": [float(v) for v in fr.pose.matrix.ravel()]})
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": 1,
        "width": g.width,
        "height": g.height,
        "n_frames": len(frames),
        "pixel_spacing": [float(g.pixel_spacing[0]), float(g.pixel_spacing[1])],
        "probe_kind": g.probe_kind,
        "apex_offset": float(g.apex_offset),
        "frames": entries,
    }
    _atomic_write(root / MANIFEST_NAME, (json.dumps(manifest, indent=1) + "\n").encode("utf-8"))


def _geometry_from(obj: Dict[str, Any], where: str) -> FrameGeometry:
    try:
        return FrameGeometry(
            width=int(_require(obj, "width", where)),
            height=int(_require(obj, "height", where)),
            pixel_spacing=tuple(float(v) for v in _require(obj, "pixel_spacing", where)),
            probe_kind=obj.get("probe_kind", "linear"),
            apex_offset=float(obj.get("apex_offset", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{where}: invalid geometry ({exc})") from None


def load_bundle(path: PathLike) -> TrackedFrameSet:
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise FileNotFoundError(f"bundle manifest not found: {mpath}")
    man = _read_json(mpath)
    where = str(mpath)
    if _require(man, "format", where) != BUNDLE_FORMAT:
        raise FormatError(f"{where}: format is {man['format']!r}, expected {BUNDLE_FORMAT!r}")
    geom = _geometry_from(man, where)
    n = int(_require(man, "n_frames", where))
    entries = _require(man, "frames", where)
    if len(entries) != n:
        raise FormatError(f"{where}: n_frames is {n} but {len(entries)} frame entries are listed")
    size = geom.width * geom.height
    frames: List[Frame] = []
    for i, entry in enumerate(entries):
        fpath = root / str(_require(entry, "file", f"{where} frame {i}"))
        if not fpath.is_file():
            raise FileNotFoundError(f"frame {i}: file not found: {fpath}")
        raw = fpath.read_bytes()
        if len(raw) != size:
            raise FormatError(f"{fpath}: expected {size} bytes ({geom.width}x{geom.height}), found {len(raw)}")
        vals = _require(entry, "pose", f"{where} frame {i}")
        if len(vals) != 16:
            raise FormatError(f"{where}: frame {i} pose has {len(vals)} numbers, expected 16")
        try:
            pose = RigidPose(np.array(vals, dtype=np.float64).reshape(4, 4), tol=POSE_TOL)
        except ValueError as exc:
            raise FormatError(f"{where}: frame {i} pose is not a rigid transform ({exc})") from None
        image = np.frombuffer(raw, dtype=np.uint8).reshape(geom.height, geom.width).copy()
        frames.append(Frame(image, pose))
    if not frames:
        raise FormatError(f"{where}: bundle has no frames")
    return TrackedFrameSet(geom, frames)


# --- volume files ------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def save_volume(vol: Union[ScalarVolume, VectorVolume], path: PathLike, element_type: str = None) -> None:
    """Write a header and little-endian x-fastest payload.

    ``element_type`` defaults to ``vec3f32`` for vector volumes, ``u8``
    for uint8 data and ``f32`` otherwise.
    """
    vector = isinstance(vol, VectorVolume)
    if element_type is None:
        element_type = "vec3f32" if vector else ("u8" if vol.data.dtype == np.uint8 else "f32")
    if element_type not in ELEMENT_TYPES:
        raise FormatError(f"unknown element type {element_type!r}")
    if vector != (element_type == "vec3f32"):
        raise FormatError(f"element type {element_type} does not fit a {type(vol).__name__}")
    dtype, _ = ELEMENT_TYPES[element_type]
    data = np.asarray(vol.data)
    if element_type == "u8" and data.dtype != np.uint8:
        if not np.all((data >= 0) & (data <= 255) & (data == np.round(data))):
            raise FormatError("u8 volumes need integer values in 0..255")
    if vector:
        payload = data.transpose(2, 1, 0, 3).astype(dtype).tobytes()
    else:
        payload = data.astype(dtype).ravel(order="F").tobytes()
    m = vol.meta
    header = "\n".join(
        [
            VOLUME_MAGIC,
            "dims " + " ".join(str(d) for d in m.dims),
            "spacing " + " ".join(_fmt(v) for v in m.spacing),
            "origin " + " ".join(_fmt(v) for v in m.origin),
            f"element_type {element_type}",
            "end",
            "",
        ]
    )
    _atomic_write(path, header.encode("ascii") + payload)


def _parse_header(path: Path, blob: bytes):
    fields: Dict[str, Tuple[int, List[str]]] = {}
    pos = 0
    lineno = 0
    while True:
        nl = blob.find(b"\n", pos)
        lineno += 1
        if nl < 0:
            raise FormatError(f"{path}:{lineno}: header ends without an 'end' line")
        try:
            line = blob[pos:nl].decode("ascii").strip()
        except UnicodeDecodeError:
            raise FormatError(f"{path}:{lineno}: header line is not ASCII") from None
        pos = nl + 1
        if lineno == 1:
            if line != VOLUME_MAGIC:
                raise FormatError(f"{path}:1: expected {VOLUME_MAGIC!r}, found {line!r}")
            continue
        if line == "end":
            return fields, pos
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        if key in fields:
            raise FormatError(f"{path}:{lineno}: duplicate field {key!r}")
        fields[key] = (lineno, vals)


def _numbers(path, fields, key, conv, count):
    if key not in fields:
        raise FormatError(f"{path}: header is missing {key!r}")
    lineno, vals = fields[key]
    if len(vals) != count:
        raise FormatError(f"{path}:{lineno}: {key} needs {count} values, found {len(vals)}")
    try:
        out = tuple(conv(v) for v in vals)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: {key} has a non-numeric value") from None
    if not all(math.isfinite(v) for v in out):
        raise FormatError(f"{path}:{lineno}: {key} must be finite")
    return out


def load_volume(path: PathLike) -> Union[ScalarVolume, VectorVolume]:
    """Read a volume file; u8 payloads load as uint8, others as float32."""
    path = Path(path)
    blob = path.read_bytes()
    fields, start = _parse_header(path, blob)
    dims = _numbers(path, fields, "dims", int, 3)
    if any(d < 1 for d in dims):
        raise FormatError(f"{path}:{fields['dims'][0]}: dims must be positive, found {dims}")
    spacing = _numbers(path, fields, "spacing", float, 3)
    origin = _numbers(path, fields, "origin", float, 3)
    if "element_type" not in fields:
        raise FormatError(f"{path}: header is missing 'element_type'")
    lineno, et = fields["element_type"]
    if len(et) != 1 or et[0] not in ELEMENT_TYPES:
        raise FormatError(f"{path}:{lineno}: element_type must be one of {', '.join(ELEMENT_TYPES)}")
    for key, (ln, _) in fields.items():
        if key not in ("dims", "spacing", "origin", "element_type"):
            raise FormatError(f"{path}:{ln}: unknown header field {key!r}")
    dtype, comps = ELEMENT_TYPES[et[0]]
    try:
        meta = VolumeMeta(dims, spacing, origin)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    n = meta.size * comps
    expected = n * dtype.itemsize
    found = len(blob) - start
    if found != expected:
        raise FormatError(f"{path}: payload is {found} bytes, expected {expected} for dims {dims} {et[0]}")
    flat = np.frombuffer(blob, dtype=dtype, count=n, offset=start)
    native = flat.astype(dtype.newbyteorder("="))
    if comps == 3:
        return VectorVolume(meta, native.reshape(dims[2], dims[1], dims[0], 3).transpose(2, 1, 0, 3).copy())
    return ScalarVolume(meta, native.reshape(dims, order="F").copy())


# --- configs -----------------------------------------------------------------

_ARC_KEYS = ("center", "radius", "angle_range", "n_frames", "axis", "elevation_offsets")
_REFLECTION_KEYS = ("z1", "z2", "base_intensity", "noise_sigma", "shadow_attenuation", "smear_rows", "pulse_length")


def _build(cls, obj, keys, where, **conv):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    _no_extra(obj, keys, where)
    kwargs = {k: conv.get(k, lambda v: v)(v) for k, v in obj.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from None


def load_sweep_config(path: PathLike) -> Tuple[SweepSpec, ReflectionParams]:
    """Read a JSON sweep description (geometry, trajectory, reflection)."""
    path = Path(path)
    cfg = _read_json(path)
    where = str(path)
    if not isinstance(cfg, dict):
        raise FormatError(f"{where}: expected a JSON object")
    _no_extra(cfg, ("geometry", "arc", "poses", "reflection", "pose_jitter"), where)
    gobj = _require(cfg, "geometry", where)
    _no_extra(gobj, ("width", "height", "pixel_spacing", "probe_kind", "apex_offset"), f"{where} geometry")
    geom = _geometry_from(gobj, f"{where} geometry")
    if ("arc" in cfg) == ("poses" in cfg):
        raise FormatError(f"{where}: give exactly one of 'arc' or 'poses'")
    if "arc" in cfg:
        traj = _build(
            ArcSweep,
            cfg["arc"],
            _ARC_KEYS,
            f"{where} arc",
            center=lambda v: tuple(float(x) for x in v),
            elevation_offsets=lambda v: tuple(float(x) for x in v),
        )
    else:
        traj = []
        for i, vals in enumerate(cfg["poses"]):
            try:
                traj.append(RigidPose(np.array(vals, dtype=np.float64).reshape(4, 4), tol=POSE_TOL))
            except ValueError as exc:
                raise FormatError(f"{where}: pose {i} is not a rigid transform ({exc})") from None
        if not traj:
            raise FormatError(f"{where}: 'poses' is empty")
    params = _build(ReflectionParams, cfg.get("reflection", {}), _REFLECTION_KEYS, f"{where} reflection")
    jitter = cfg.get("pose_jitter", [0.0, 0.0])
    if len(jitter) != 2 or any(float(j) < 0 for j in jitter):
        raise FormatError(f"{where}: pose_jitter must be two non-negative numbers [deg, mm]")
    spec = SweepSpec(geom, traj, (float(jitter[0]), float(jitter[1])))
    try:
        spec.poses()
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None
    return spec, params


_SHAPES = {"sphere": Sphere, "half_space": HalfSpace, "twin_ridge": TwinRidge}


def load_phantom_config(path: PathLike):
    """Read a JSON phantom description: grid plus one analytic shape."""
    path = Path(path)
    cfg = _read_json(path)
    where = str(path)
    if not isinstance(cfg, dict):
        raise FormatError(f"{where}: expected a JSON object")
    _no_extra(cfg, ("dims", "spacing", "origin", "shape"), where)
    try:
        meta = VolumeMeta(
            tuple(int(d) for d in _require(cfg, "dims", where)),
            tuple(float(v) for v in cfg.get("spacing", (1.0, 1.0, 1.0))),
            tuple(float(v) for v in cfg.get("origin", (0.0, 0.0, 0.0))),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{where}: invalid grid ({exc})") from None
    sobj = dict(_require(cfg, "shape", where))
    kind = sobj.pop("type", None)
    if kind not in _SHAPES:
        raise FormatError(f"{where}: shape type must be one of {', '.join(_SHAPES)}")
    cls = _SHAPES[kind]
    keys = tuple(cls.__dataclass_fields__)
    vec = lambda v: tuple(float(x) for x in v)  # noqa: E731
    shape = _build(cls, sobj, keys, f"{where} shape", center=vec, normal=vec, z_range=vec)
    return shape, meta


# --- slice export ------------------------------------------------------------


def slice_image(vol: ScalarVolume, axis: str, index: int) -> np.ndarray:
    """8-bit image of one axis-aligned plane.

    Image rows/columns are (y, x) for axis z, (z, y) for axis x and
    (z, x) for axis y. uint8 volumes are copied; other types are mapped
    linearly from the volume's [min, max] to [0, 255] (all zeros when
    the volume is constant), so slices of one volume share a scale.
    """
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    ax = "xyz".index(axis)
    n = vol.meta.dims[ax]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range 0..{n - 1} for axis {axis}")
    data = np.asarray(vol.data)
    plane = np.take(data, index, axis=ax).T
    if plane.dtype == np.uint8:
        return np.ascontiguousarray(plane)
    p = plane.astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    if not hi > lo:
        return np.zeros(p.shape, dtype=np.uint8)
    return np.rint((p - lo) * (255.0 / (hi - lo))).clip(0, 255).astype(np.uint8)


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    img = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = img.shape
    _atomic_write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def export_slice(vol: ScalarVolume, axis: str, index: int, path: PathLike) -> np.ndarray:
    img = slice_image(vol, axis, index)
    write_pgm(path, img)
    return img
