"""Pixel-based volume reconstruction from tracked frames.

Two distribution rules are provided. The baseline averages every pixel
that lands in a voxel. The angle-weighted rule enhances pixels that hit
a probable bone surface close to perpendicular, and accumulates a
visiting score so that well-insonified voxels resist later oblique
frames. Both are followed by nearest-neighbour hole filling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np

from .geometry import (
    BeamDirectionMap,
    FrameGeometry,
    RigidPose,
    VolumeMeta,
    pixels_to_world,
    transform_directions,
    world_to_voxel_array,
)
from .volume import MetaMismatch, ScalarVolume, VectorVolume, check_same_meta

__all__ = [
    "Frame",
    "TrackedFrameSet",
    "ReconConfig",
    "ReconOutput",
    "angle_weight",
    "compensate_weight",
    "enhanced_value",
    "running_update",
    "distribute_aif",
    "distribute_baseline",
    "distribute",
    "fill_holes",
    "reconstruct",
]

MAX_INTENSITY = 255.0


@dataclass
class Frame:
    image: np.ndarray
    pose: RigidPose


@dataclass
class TrackedFrameSet:
    geom: FrameGeometry
    frames: List[Frame] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.frames:
            raise ValueError("a tracked frame set needs at least one frame")
        for i, fr in enumerate(self.frames):
            if np.shape(fr.image) != self.geom.shape:
                raise ValueError(f"frame {i} has shape {np.shape(fr.image)}, expected {self.geom.shape}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def poses(self) -> List[RigidPose]:
        return [f.pose for f in self.frames]


@dataclass(frozen=True)
class ReconConfig:
    alpha: float = 0.1
    beta: float = 0.1
    compensate: bool = False
    hole_fill_radius: float = 3.0
    method: Literal["baseline", "aif"] = "aif"

    def __post_init__(self) -> None:
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not self.hole_fill_radius >= 0:
            raise ValueError(f"hole_fill_radius must be >= 0, got {self.hole_fill_radius}")
        if self.method not in ("baseline", "aif"):
            raise ValueError(f"method must be 'baseline' or 'aif', got {self.method!r}")


@dataclass
class ReconOutput:
    volume: ScalarVolume
    count: ScalarVolume
    visited: np.ndarray = field(repr=False)


def angle_weight(beam_world, grad) -> float:
    b, g = beam_world, grad
    w = b[0] * g[0] + b[1] * g[1] + b[2] * g[2]
    return 0.0 if w < 0 else float(w)


def compensate_weight(w: float, beta: float) -> float:
    """Reciprocal of the angle weight above ``beta``; grazing beams pass through."""
    return 1.0 / w if w > beta else w


def enhanced_value(p_data: float, w_angle: float, w_bone: float, alpha: float) -> float:
    v = p_data * w_angle * w_bone * alpha + p_data
    return MAX_INTENSITY if v > MAX_INTENSITY else v


def running_update(v_old: float, count: float, v_temp: float) -> float:
    return count / (count + 1) * v_old + v_temp * (1 / (count + 1))


def _frame_samples(frame: Frame, geom: FrameGeometry, meta: VolumeMeta):
    """Row-major pixel values and linear voxel indices of in-bounds pixels."""
    h, w = geom.shape
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    world = pixels_to_world(cols.ravel(), rows.ravel(), geom, frame.pose)
    idx, inside = world_to_voxel_array(world, meta)
    lin = meta.linear_index(idx[inside])
    values = np.asarray(frame.image, dtype=np.float64).ravel()[inside]
    return lin, values, inside


def _occurrence_rank(lin: np.ndarray) -> np.ndarray:
    """For each entry, how many earlier entries share its voxel."""
    order = np.argsort(lin, kind="stable")
    s = lin[order]
    starts = np.r_[0, np.flatnonzero(s[1:] != s[:-1]) + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, s.size]))
    rank = np.empty_like(lin)
    rank[order] = np.arange(s.size) - group_start
    return rank


def _check_beam_map(bmap: BeamDirectionMap, geom: FrameGeometry) -> None:
    if bmap.shape != geom.shape:
        raise MetaMismatch(f"beam map shape {bmap.shape} does not match frame shape {geom.shape}")


def _xfast_vectors(v: VectorVolume) -> np.ndarray:
    return v.data.transpose(2, 1, 0, 3).reshape(-1, 3)


def distribute_aif(
    frames: TrackedFrameSet,
    prob: ScalarVolume,
    dir: VectorVolume,
    bmap: BeamDirectionMap,
    meta: VolumeMeta,
    cfg: ReconConfig = ReconConfig(),
) -> ReconOutput:
    """Angle- and bone-weighted distribution step.

    Frames are consumed in order and pixels in row-major order. The
    running update is order dependent only between pixels that share a
    voxel, so each frame is applied in rounds: round ``k`` updates every
    voxel's ``k``-th pixel at once, which reproduces the sequential
    result exactly.
    """
    check_same_meta(prob.meta, dir.meta, meta)
    _check_beam_map(bmap, frames.geom)

    prob_flat = np.asarray(prob.flat(), dtype=np.float64)
    dir_flat = np.asarray(_xfast_vectors(dir), dtype=np.float64)
    beams_img = bmap.dirs.reshape(-1, 3)

    recon = np.zeros(meta.size)
    count = np.zeros(meta.size)
    visited = np.zeros(meta.size, dtype=bool)

    for frame in frames.frames:
        lin, p, inside = _frame_samples(frame, frames.geom, meta)
        if lin.size == 0:
            continue
        b = transform_directions(frame.pose, beams_img)[inside]
        g = dir_flat[lin]
        w = b[:, 0] * g[:, 0] + b[:, 1] * g[:, 1] + b[:, 2] * g[:, 2]
        w = np.where(w < 0, 0.0, w)
        if cfg.compensate:
            over = w > cfg.beta
            w = np.where(over, 1.0 / np.where(over, w, 1.0), w)
        wb = prob_flat[lin]
        v_temp = p * w * wb * cfg.alpha + p
        v_temp = np.where(v_temp > MAX_INTENSITY, MAX_INTENSITY, v_temp)
        inc = w * wb

        rank = _occurrence_rank(lin)
        for r in range(int(rank.max()) + 1):
            sel = rank == r
            li = lin[sel]
            c = count[li]
            recon[li] = c / (c + 1) * recon[li] + v_temp[sel] * (1 / (c + 1))
            count[li] = c + inc[sel]
        visited[lin] = True

    return _output(meta, recon, count, visited)


def distribute_baseline(
    frames: TrackedFrameSet,
    bmap: Optional[BeamDirectionMap],
    meta: VolumeMeta,
) -> ReconOutput:
    """Plain mean of every pixel distributed to each voxel.

    ``bmap`` plays no part in the average; it is only checked against
    the frame shape so both distribution rules take the same inputs.
    """
    if bmap is not None:
        _check_beam_map(bmap, frames.geom)
    total = np.zeros(meta.size)
    count = np.zeros(meta.size)
    for frame in frames.frames:
        lin, p, _ = _frame_samples(frame, frames.geom, meta)
        total += np.bincount(lin, weights=p, minlength=meta.size)
        count += np.bincount(lin, minlength=meta.size)
    visited = count > 0
    recon = np.zeros(meta.size)
    recon[visited] = total[visited] / count[visited]
    return _output(meta, recon, count, visited)


def _output(meta: VolumeMeta, recon, count, visited) -> ReconOutput:
    def vol(a):
        return a.reshape(meta.dims, order="F")

    return ReconOutput(
        volume=ScalarVolume(meta, vol(recon)),
        count=ScalarVolume(meta, vol(count)),
        visited=vol(visited),
    )


def _hole_offsets(radius: float) -> np.ndarray:
    """Offsets within ``radius`` ordered by distance, then by (z, y, x).

    For a fixed hole, (z, y, x) lexicographic order of the offset is the
    linear-index order of the candidate voxel, which gives the tie-break.
    """
    r = int(math.floor(radius))
    rng = np.arange(-r, r + 1)
    oz, oy, ox = np.meshgrid(rng, rng, rng, indexing="ij")
    off = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
    d2 = (off**2).sum(axis=1)
    keep = (d2 > 0) & (d2 <= radius * radius)
    off, d2 = off[keep], d2[keep]
    order = np.lexsort((off[:, 0], off[:, 1], off[:, 2], d2))
    return off[order]


def _shifted(arr: np.ndarray, off, fill) -> np.ndarray:
    """``out[i] = arr[i + off]`` with ``fill`` outside the grid."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, n in zip(off, arr.shape):
        o = int(o)
        if abs(o) >= n:
            return out
        src.append(slice(max(o, 0), n + min(o, 0)))
        dst.append(slice(max(-o, 0), n - max(o, 0)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def fill_holes(out: ReconOutput, radius: float) -> ScalarVolume:
    """Give each unvisited voxel the value of its nearest visited voxel.

    Distances are Euclidean in voxel units; holes farther than
    ``radius`` from every visited voxel stay 0. Equidistant candidates
    resolve to the smallest x-fastest linear index.
    """
    if not radius >= 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    data = np.array(out.volume.data, dtype=np.float64)
    visited = np.asarray(out.visited, dtype=bool)
    pending = ~visited
    for off in _hole_offsets(radius):
        if not pending.any():
            break
        src_ok = _shifted(visited, off, False)
        take = pending & src_ok
        if take.any():
            data[take] = _shifted(out.volume.data, off, 0.0)[take]
            pending &= ~take
    return out.volume.like(data)


def distribute(frames, prob, dir, bmap, meta, cfg: ReconConfig = ReconConfig()) -> ReconOutput:
    if cfg.method == "baseline":
        return distribute_baseline(frames, bmap, meta)
    return distribute_aif(frames, prob, dir, bmap, meta, cfg)


def reconstruct(frames, prob, dir, bmap, meta, cfg: ReconConfig = ReconConfig()) -> ScalarVolume:
    """Distribution step for ``cfg.method`` followed by hole filling."""
    return fill_holes(distribute(frames, prob, dir, bmap, meta, cfg), cfg.hole_fill_radius)
