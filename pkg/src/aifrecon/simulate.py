"""Synthetic phantoms and tracked multi-angle ultrasound sweeps.

The forward model is deliberately simple: each beam is ray-marched
through a binary bone label, the first surface it enters reflects
``cos(theta) * R**2 * I_i`` (R the impedance reflection coefficient),
every crossing attenuates whatever lies behind it, and additive Gaussian
noise stands in for speckle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .geometry import (
    BeamDirectionMap,
    FrameGeometry,
    RigidPose,
    VolumeMeta,
    make_beam_direction_map,
    rotation_x,
    rotation_y,
    rotation_z,
    transform_directions,
)
from .mapprep import gaussian3d, make_gradient_map
from .recon import Frame, TrackedFrameSet
from .volume import ScalarVolume, VectorVolume

__all__ = [
    "Sphere",
    "HalfSpace",
    "TwinRidge",
    "make_phantom",
    "ReflectionParams",
    "reflected_intensity",
    "surface_normals",
    "synthesize_frame",
    "ArcSweep",
    "SweepSpec",
    "make_sweep",
]


# -- phantoms -----------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: Tuple[float, float, float]
    radius: float

    def inside(self, p: np.ndarray) -> np.ndarray:
        d = p - np.asarray(self.center, dtype=np.float64)
        return (d**2).sum(axis=-1) < self.radius**2


@dataclass(frozen=True)
class HalfSpace:
    """Solid where ``dot(normal, p) >= offset``; the normal points into the solid."""

    normal: Tuple[float, float, float]
    offset: float

    def inside(self, p: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return p @ n >= self.offset


@dataclass(frozen=True)
class TwinRidge:
    """Two roof-shaped ridges over a flat base, separated by a gap.

    A crude spinous-process pair seen from the back: ridges run along z,
    are separated along x by ``gap`` mm, and peak at depth ``apex_y``
    (y grows with depth). Each roof face slopes ``slope_deg`` away from
    horizontal. A flat plate at depth ``base_y`` lies under the gap.
    """

    center_x: float = 32.0
    apex_y: float = 24.0
    base_y: float = 44.0
    half_width: float = 12.0
    gap: float = 10.0
    slope_deg: float = 35.0
    z_range: Tuple[float, float] = (-math.inf, math.inf)

    def inside(self, p: np.ndarray) -> np.ndarray:
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        zin = (z >= self.z_range[0]) & (z <= self.z_range[1])
        tan = math.tan(math.radians(self.slope_deg))
        offset = self.gap / 2.0 + self.half_width
        solid = y >= self.base_y
        for side in (-1.0, 1.0):
            u = np.abs(x - (self.center_x + side * offset))
            solid |= (u <= self.half_width) & (y >= self.apex_y + tan * u)
        return solid & zin


Shape = Union[Sphere, HalfSpace, TwinRidge]


def make_phantom(shape: Shape, meta: VolumeMeta) -> ScalarVolume:
    """Binary label: 1 where the voxel centre lies inside the solid."""
    inside = shape.inside(meta.voxel_centers())
    return ScalarVolume(meta, inside.astype(np.uint8))


# -- reflection model ----------------------------------------------------------


@dataclass(frozen=True)
class ReflectionParams:
    """Forward-model constants.

    ``pulse_length`` (mm) is the axial extent of an echo, centred on the
    interface; it never drops below one image row. ``smear_rows`` turns
    on the oblique thick-echo artefact: the echo is stretched over
    ``round(smear_rows * (1 - cos))`` extra rows.
    """

    z1: float = 1.63
    z2: float = 7.8
    base_intensity: float = 400.0
    noise_sigma: float = 8.0
    shadow_attenuation: float = 0.1
    smear_rows: float = 0.0
    pulse_length: float = 0.0

    def __post_init__(self) -> None:
        if not (self.z1 > 0 and self.z2 > 0):
            raise ValueError("acoustic impedances must be positive")
        if not 0 <= self.shadow_attenuation <= 1:
            raise ValueError("shadow_attenuation must be in [0, 1]")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.smear_rows >= 0:
            raise ValueError("smear_rows must be >= 0")
        if not self.pulse_length >= 0:
            raise ValueError("pulse_length must be >= 0")

    @property
    def reflection_coefficient(self) -> float:
        r = (self.z2 - self.z1) / (self.z2 + self.z1)
        return r * r


def reflected_intensity(cos_theta, params: ReflectionParams):
    """Echo energy off an interface hit at incidence cosine ``cos_theta``."""
    return np.abs(np.asarray(cos_theta) * params.reflection_coefficient * params.base_intensity)


def surface_normals(label: ScalarVolume, sigma: float = 1.5) -> VectorVolume:
    """Unit normals pointing into the solid, from a lightly blurred label."""
    smooth = gaussian3d(label.like(np.asarray(label.data, dtype=np.float64)), sigma)
    return make_gradient_map(smooth)


def _normal_at(normals: VectorVolume, points: np.ndarray) -> np.ndarray:
    """Trilinearly interpolated unit normals at world ``points``."""
    meta = normals.meta
    coords = [(points[:, k] - meta.origin[k]) / meta.spacing[k] for k in range(3)]
    n = np.stack(
        [ndimage.map_coordinates(normals.data[..., k], coords, order=1, mode="nearest") for k in range(3)],
        axis=-1,
    )
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


@dataclass
class _BeamLines:
    """Beam lines in frame space and the scan conversion back to pixels."""

    origins: np.ndarray  # (B, 3) entry point on the top image row
    dirs: np.ndarray  # (B, 3)
    pixel_beam: np.ndarray  # (H*W,) beam index of each pixel
    t_pixel: np.ndarray  # (H*W,) path length from the beam origin
    half: np.ndarray  # (H*W,) half extent of one image row along the beam


def _beam_lines(geom: FrameGeometry, bmap: BeamDirectionMap) -> _BeamLines:
    h, w = geom.shape
    sx, sy = geom.pixel_spacing
    pos = geom.pixel_positions().reshape(-1, 3)
    if geom.probe_kind == "linear":
        origins = np.zeros((w, 3))
        origins[:, 0] = np.arange(w) * sx
        dirs = np.tile([0.0, 1.0, 0.0], (w, 1))
        return _BeamLines(origins, dirs, np.tile(np.arange(w), h), pos[:, 1].copy(), np.full(h * w, 0.5 * sy))

    # phased: a fan of lines dense enough that no pixel is more than half
    # a pixel from its line at the deepest point
    apex = geom.apex
    d = bmap.dirs.reshape(-1, 3)
    psi = np.arctan2(d[:, 0], d[:, 1])
    r_pix = np.linalg.norm(pos - apex, axis=1)
    lo, hi = psi.min(), psi.max()
    n = max(int(math.ceil((hi - lo) * r_pix.max() / min(sx, sy))) + 1, 1)
    angles = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
    dirs = np.stack([np.sin(angles), np.cos(angles), np.zeros(n)], axis=1)
    t0 = geom.apex_offset / np.cos(angles)
    origins = apex + t0[:, None] * dirs
    step = (hi - lo) / (n - 1) if n > 1 else 1.0
    beam = np.clip(np.rint((psi - lo) / step).astype(np.int64), 0, n - 1)
    t_pixel = np.maximum(r_pix - t0[beam], 0.0)
    dy = np.where(d[:, 1] > 0, d[:, 1], 1.0)
    return _BeamLines(origins, dirs, beam, t_pixel, 0.5 * sy / dy)


def synthesize_frame(
    label: ScalarVolume,
    surface_normals: VectorVolume,
    pose: RigidPose,
    geom: FrameGeometry,
    bmap: BeamDirectionMap,
    params: ReflectionParams,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Render one B-mode frame as float intensities in [0, 255].

    Beam lines are marched from the top image row in steps of the
    smallest voxel spacing: one line per column for linear probes, a
    dense fan from the apex for phased probes (pixels take their nearest
    line). A crossing is a label change between consecutive samples. The
    pixel whose depth window holds a crossing shows its echo, scaled by
    ``shadow_attenuation`` once per earlier crossing on the same line.
    Without ``rng`` the frame is noiseless.
    """
    meta = label.meta
    h, w = geom.shape
    step = min(meta.spacing)
    lines = _beam_lines(geom, bmap)
    n_beams = lines.origins.shape[0]

    half_echo = np.maximum(lines.half, 0.5 * params.pulse_length)
    widen = half_echo + 2.0 * math.ceil(params.smear_rows) * lines.half
    t_need = np.zeros(n_beams)
    np.maximum.at(t_need, lines.pixel_beam, lines.t_pixel + widen)
    n_samples = int(math.ceil(t_need.max() / step)) + 2
    t = np.arange(n_samples) * step

    origin_w = lines.origins @ pose.rotation.T + pose.translation
    dirs_w = transform_directions(pose, lines.dirs)
    coords = [
        (origin_w[:, k, None] + t[None, :] * dirs_w[:, k, None] - meta.origin[k]) / meta.spacing[k]
        for k in range(3)
    ]
    lab = ndimage.map_coordinates(
        np.asarray(label.data, dtype=np.float32), coords, order=0, mode="constant", cval=0.0, prefilter=False
    ) > 0.5
    change = lab[:, 1:] != lab[:, :-1]

    # crossings per beam line, padded to a common count
    beam_idx, sample_idx = np.nonzero(change)
    n_cross = np.bincount(beam_idx, minlength=n_beams)
    m = max(int(n_cross.max()) if n_cross.size else 0, 1)
    rank = np.arange(beam_idx.size) - np.repeat(np.cumsum(n_cross) - n_cross, n_cross)
    t_cross = np.full((n_beams, m), np.inf)
    cos = np.zeros((n_beams, m))
    if beam_idx.size:
        tc = (sample_idx + 0.5) * step
        t_cross[beam_idx, rank] = tc
        where = origin_w[beam_idx] + tc[:, None] * dirs_w[beam_idx]
        c = np.abs(np.einsum("pc,pc->p", _normal_at(surface_normals, where), dirs_w[beam_idx]))
        cos[beam_idx, rank] = np.minimum(c, 1.0)

    tc_p = t_cross[lines.pixel_beam]
    cos_p = cos[lines.pixel_beam]
    half = half_echo[:, None]
    extra = np.rint(params.smear_rows * (1.0 - cos_p)) * 2.0 * lines.half[:, None]
    tp = lines.t_pixel[:, None]
    hit = (tc_p - half <= tp) & (tp < tc_p + half + extra)

    image = np.zeros(h * w)
    px = np.flatnonzero(hit.any(axis=1))
    if px.size:
        first = np.argmax(hit[px], axis=1)
        image[px] = reflected_intensity(cos_p[px, first], params) * params.shadow_attenuation ** first

    image = image.reshape(h, w)
    if rng is not None and params.noise_sigma > 0:
        image = image + rng.normal(0.0, params.noise_sigma, size=image.shape)
    return np.clip(image, 0.0, 255.0)


# -- sweeps --------------------------------------------------------------------

_ROTATIONS = {"x": rotation_x, "z": rotation_z}


@dataclass(frozen=True)
class ArcSweep:
    """Probe orbiting ``center`` at ``radius`` mm while aiming at it.

    At angle 0 the beam axis points along +y. The arc rotates about the
    world ``axis`` (x or z; z keeps the image in an x-y plane) from
    ``-angle_range/2`` to ``+angle_range/2`` degrees. The virtual apex
    (top-centre of the image for linear probes) sits on the orbit.
    Each offset in ``elevation_offsets`` shifts a copy of the arc along
    the rotation axis.
    """

    center: Tuple[float, float, float]
    radius: float
    angle_range: float = 90.0
    n_frames: int = 60
    axis: str = "z"
    elevation_offsets: Tuple[float, ...] = (0.0,)

    def poses(self, geom: FrameGeometry) -> List[RigidPose]:
        if self.n_frames < 1:
            raise ValueError("an arc needs at least one frame")
        if self.axis not in _ROTATIONS:
            raise ValueError(f"arc axis must be 'x' or 'z', got {self.axis!r}")
        rot = _ROTATIONS[self.axis]
        axis_vec = np.eye(3)["xyz".index(self.axis)]
        if self.n_frames == 1:
            angles = np.zeros(1)
        else:
            half = math.radians(self.angle_range) / 2.0
            angles = np.linspace(-half, half, self.n_frames)
        apex = geom.apex
        c = np.asarray(self.center, dtype=np.float64)
        out = []
        for off in self.elevation_offsets:
            for a in angles:
                r = rot(-a) if self.axis == "z" else rot(a)
                beam = r @ np.array([0.0, 1.0, 0.0])
                probe = c + off * axis_vec - self.radius * beam
                out.append(RigidPose.from_rt(r, probe - r @ apex))
        return out


@dataclass
class SweepSpec:
    geom: FrameGeometry
    trajectory: Union[ArcSweep, Sequence[RigidPose]]
    pose_jitter: Tuple[float, float] = (0.0, 0.0)

    def poses(self) -> List[RigidPose]:
        if isinstance(self.trajectory, ArcSweep):
            poses = self.trajectory.poses(self.geom)
        else:
            poses = list(self.trajectory)
        if not poses:
            raise ValueError("a sweep needs at least one pose")
        return poses


def _jittered(pose: RigidPose, sigma_deg: float, sigma_mm: float, rng: np.random.Generator) -> RigidPose:
    ax, ay, az = np.radians(rng.normal(0.0, sigma_deg, size=3))
    dr = rotation_z(az) @ rotation_y(ay) @ rotation_x(ax)
    m = pose.matrix.copy()
    m[:3, :3] = m[:3, :3] @ dr
    m[:3, 3] = m[:3, 3] + rng.normal(0.0, sigma_mm, size=3)
    return RigidPose(m)


def make_sweep(
    spec: SweepSpec,
    label: ScalarVolume,
    params: ReflectionParams,
    seed: int = 0,
    normals: Optional[VectorVolume] = None,
) -> TrackedFrameSet:
    """Synthesize one 8-bit frame per pose.

    Every frame draws noise from its own child of ``SeedSequence(seed)``
    so frames can be rendered in any order with identical results.
    ``spec.pose_jitter = (deg, mm)`` perturbs the recorded poses only.
    """
    poses = spec.poses()
    bmap = make_beam_direction_map(spec.geom)
    if normals is None:
        normals = surface_normals(label)
    children = np.random.SeedSequence(seed).spawn(2 * len(poses))
    sigma_deg, sigma_mm = spec.pose_jitter
    frames = []
    for i, pose in enumerate(poses):
        rng = np.random.default_rng(children[2 * i])
        img = synthesize_frame(label, normals, pose, spec.geom, bmap, params, rng=rng)
        recorded = pose
        if sigma_deg > 0 or sigma_mm > 0:
            recorded = _jittered(pose, sigma_deg, sigma_mm, np.random.default_rng(children[2 * i + 1]))
        frames.append(Frame(np.rint(img).astype(np.uint8), recorded))
    return TrackedFrameSet(spec.geom, frames)
