"""Rigid poses, probe beam geometry and the pixel -> voxel mapping.

Image coordinates: X runs along columns (lateral), Y along rows (depth),
and the image plane is Z = 0. A pixel at (col, row) sits at
``(col * sx, row * sy, 0)`` millimetres in its frame.

The scalar functions (`pixel_to_world`, `world_to_voxel`,
`transform_direction`) and their array counterparts evaluate the same
floating point expressions in the same order, so the vectorised
distribution step agrees bit-for-bit with a per-pixel transcription.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from typing import Literal, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "RigidPose",
    "FrameGeometry",
    "BeamDirectionMap",
    "VolumeMeta",
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "make_beam_direction_map",
    "pixel_to_world",
    "pixels_to_world",
    "world_to_voxel",
    "world_to_voxel_array",
    "transform_direction",
    "transform_directions",
    "round_half_away",
]

ProbeKind = Literal["linear", "phased"]

_DEFAULT_BEAM = (0.0, 1.0, 0.0)


def rigid_error(matrix: np.ndarray) -> float:
    """Max-abs deviation of the rotation block from orthonormality."""
    r = np.asarray(matrix, dtype=np.float64)[:3, :3]
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


@dataclass(frozen=True)
class RigidPose:
    """4x4 homogeneous frame -> world transform, translation in mm."""

    matrix: np.ndarray
    tol: InitVar[float] = 1e-6

    def __post_init__(self, tol: float) -> None:
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose must be 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("pose contains non-finite entries")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"pose last row must be (0, 0, 0, 1), got {tuple(m[3])}")
        err = rigid_error(m)
        if err >= tol:
            raise ValueError(f"pose rotation block is not orthonormal (|R^T R - I| = {err:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation: np.ndarray, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidPose":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Return ``self @ other`` (apply ``other`` first)."""
        return RigidPose(self.matrix @ other.matrix, tol=1e-5)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RigidPose):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class FrameGeometry:
    width: int
    height: int
    pixel_spacing: Tuple[float, float]
    probe_kind: ProbeKind = "linear"
    apex_offset: float = 0.0

    def __post_init__(self) -> None:
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"frame must be at least 1x1 pixels, got {self.width}x{self.height}")
        sx, sy = (float(v) for v in self.pixel_spacing)
        if not (sx > 0 and sy > 0):
            raise ValueError(f"pixel spacing must be positive, got {self.pixel_spacing}")
        if self.probe_kind not in ("linear", "phased"):
            raise ValueError(f"unknown probe kind {self.probe_kind!r}")
        if not self.apex_offset >= 0:
            raise ValueError(f"apex_offset must be >= 0, got {self.apex_offset}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "pixel_spacing", (sx, sy))
        object.__setattr__(self, "apex_offset", float(self.apex_offset))

    @property
    def shape(self) -> Tuple[int, int]:
        """Image array shape, ``(height, width)``."""
        return (self.height, self.width)

    @property
    def apex(self) -> np.ndarray:
        sx, _ = self.pixel_spacing
        return np.array([self.width * sx / 2.0, -self.apex_offset, 0.0])

    def pixel_positions(self) -> np.ndarray:
        """Frame-space pixel positions, shape ``(H, W, 3)``."""
        sx, sy = self.pixel_spacing
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        pos = np.zeros((self.height, self.width, 3))
        pos[..., 0] = cols * sx
        pos[..., 1] = rows * sy
        return pos


@dataclass(frozen=True)
class BeamDirectionMap:
    """Per-pixel unit beam direction in image coordinates, shape ``(H, W, 3)``."""

    dirs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        d = np.array(self.dirs, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"beam map must have shape (H, W, 3), got {d.shape}")
        norms = np.linalg.norm(d, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("beam directions must be unit length")
        d.setflags(write=False)
        object.__setattr__(self, "dirs", d)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.dirs.shape[:2]


@dataclass(frozen=True)
class VolumeMeta:
    """Axis-aligned voxel grid; ``origin`` is the centre of voxel (0, 0, 0)."""

    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("dims, spacing and origin must each have 3 components")
        if min(dims) < 1:
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if not all(s > 0 for s in spacing):
            raise ValueError(f"all spacings must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def voxel_center(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index, dtype=np.float64) * np.asarray(self.spacing)

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of every voxel centre, shape ``dims + (3,)``."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def linear_index(self, idx: np.ndarray) -> np.ndarray:
        """x-fastest linear index of ``(..., 3)`` integer voxel indices."""
        idx = np.asarray(idx)
        nx, ny, _ = self.dims
        return idx[..., 0] + nx * (idx[..., 1] + ny * idx[..., 2])


def make_beam_direction_map(geom: FrameGeometry) -> BeamDirectionMap:
    """Pre-compute the beam direction through every pixel.

    Linear probes fire straight down the columns. Phased probes fan out
    from a virtual apex ``apex_offset`` mm above the top-centre of the
    image; a pixel lying exactly on the apex gets the straight-down beam.
    """
    h, w = geom.shape
    if geom.probe_kind == "linear":
        dirs = np.zeros((h, w, 3))
        dirs[..., 1] = 1.0
        return BeamDirectionMap(dirs)

    v = geom.pixel_positions() - geom.apex
    norm = np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1] + v[..., 2] * v[..., 2])
    zero = norm == 0.0
    safe = np.where(zero, 1.0, norm)
    dirs = v / safe[..., None]
    dirs[zero] = _DEFAULT_BEAM
    return BeamDirectionMap(dirs)


def pixels_to_world(cols: np.ndarray, rows: np.ndarray, geom: FrameGeometry, pose: RigidPose) -> np.ndarray:
    """Array form of `pixel_to_world`; returns shape ``cols.shape + (3,)``."""
    sx, sy = geom.pixel_spacing
    x = np.asarray(cols, dtype=np.float64) * sx
    y = np.asarray(rows, dtype=np.float64) * sy
    z = 0.0
    m = pose.matrix
    out = np.empty(x.shape + (3,))
    for k in range(3):
        out[..., k] = m[k, 0] * x + m[k, 1] * y + m[k, 2] * z + m[k, 3]
    return out


def pixel_to_world(col: int, row: int, geom: FrameGeometry, pose: RigidPose) -> np.ndarray:
    if not (0 <= col < geom.width and 0 <= row < geom.height):
        raise IndexError(f"pixel ({col}, {row}) outside {geom.width}x{geom.height} frame")
    return pixels_to_world(np.array([col]), np.array([row]), geom, pose)[0]


def round_half_away(q: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    q = np.asarray(q, dtype=np.float64)
    a = np.abs(q)
    f = np.floor(a)
    r = f + (a - f >= 0.5)
    return np.copysign(r, q)


def world_to_voxel_array(points: np.ndarray, meta: VolumeMeta) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest voxel index for each point.

    Returns ``(index, inside)`` where ``index`` has shape ``(..., 3)``
    (int64) and ``inside`` flags points whose index is within the grid.
    """
    p = np.asarray(points, dtype=np.float64)
    idx = np.empty(p.shape, dtype=np.int64)
    for k in range(3):
        q = (p[..., k] - meta.origin[k]) / meta.spacing[k]
        idx[..., k] = round_half_away(q).astype(np.int64)
    dims = np.asarray(meta.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=-1)
    return idx, inside


def world_to_voxel(point: Sequence[float], meta: VolumeMeta) -> Optional[Tuple[int, int, int]]:
    """Nearest voxel index of ``point``, or None when it falls outside the grid."""
    idx, inside = world_to_voxel_array(np.asarray(point, dtype=np.float64)[None, :], meta)
    if not inside[0]:
        return None
    return tuple(int(v) for v in idx[0])


def transform_directions(pose: RigidPose, d: np.ndarray) -> np.ndarray:
    """Rotate ``(..., 3)`` directions into world space and renormalise."""
    r = pose.rotation
    d = np.asarray(d, dtype=np.float64)
    out = np.empty(d.shape)
    for k in range(3):
        out[..., k] = r[k, 0] * d[..., 0] + r[k, 1] * d[..., 1] + r[k, 2] * d[..., 2]
    n = np.sqrt(out[..., 0] * out[..., 0] + out[..., 1] * out[..., 1] + out[..., 2] * out[..., 2])
    return out / n[..., None]


def transform_direction(pose: RigidPose, d: Sequence[float]) -> np.ndarray:
    return transform_directions(pose, np.asarray(d, dtype=np.float64)[None, :])[0]
