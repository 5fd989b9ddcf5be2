"""Surface contrast and boundary completeness against a ground-truth label.

Means and variances use compensated summation so results do not depend
on reduction order beyond rounding of the final division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from .geometry import VolumeMeta
from .volume import MetaMismatch, ScalarVolume, check_same_meta

__all__ = [
    "EPS",
    "EmptyRegion",
    "SurfaceMask",
    "MetricsReport",
    "contrast",
    "completeness",
    "otsu_threshold",
    "report",
    "compare",
]

EPS = 1e-6


class EmptyRegion(ValueError):
    pass


@dataclass
class SurfaceMask:
    """Boolean ground-truth surface voxels on ``meta``'s grid."""

    meta: VolumeMeta
    mask: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.meta.dims:
            raise MetaMismatch(f"mask shape {self.mask.shape} does not match dims {self.meta.dims}")

    @classmethod
    def from_label(cls, label: ScalarVolume, dilation: int = 1) -> "SurfaceMask":
        """Label voxels with a 6-connected non-label neighbour, grown by ``dilation``.

        Voxels on the grid border are not treated as surface merely for
        touching the edge, since the label is cut there, not bounded.
        """
        inside = np.asarray(label.data) != 0
        edge = inside & ~ndimage.binary_erosion(inside, border_value=1)
        if dilation > 0:
            edge = ndimage.binary_dilation(edge, iterations=dilation)
        return cls(label.meta, edge)


@dataclass(frozen=True)
class MetricsReport:
    surface_mean: float
    background_mean: float
    contrast_ratio: float
    cnr: float
    completeness: float


def _mean_var(x: np.ndarray) -> Tuple[float, float]:
    n = x.size
    m = math.fsum(x.tolist()) / n
    d = x - m
    return m, math.fsum((d * d).tolist()) / n


def _region(mask: SurfaceMask, region) -> np.ndarray:
    if region is None:
        return np.ones(mask.meta.dims, dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != mask.meta.dims:
        raise MetaMismatch(f"region shape {region.shape} does not match dims {mask.meta.dims}")
    return region


def _surface_background(vol: ScalarVolume, mask: SurfaceMask, region):
    check_same_meta(vol.meta, mask.meta)
    reg = _region(mask, region)
    data = np.asarray(vol.data, dtype=np.float64)
    s = data[mask.mask & reg]
    b = data[~mask.mask & reg]
    if s.size == 0:
        raise EmptyRegion("no surface voxels inside the evaluated region")
    if b.size == 0:
        raise EmptyRegion("no background voxels inside the evaluated region")
    return s, b


def _contrast_stats(vol, mask, region):
    s, b = _surface_background(vol, mask, region)
    ms, vs = _mean_var(s)
    mb, vb = _mean_var(b)
    return ms, mb, ms / max(mb, EPS), (ms - mb) / math.sqrt(vs + vb + EPS)


def contrast(vol: ScalarVolume, mask: SurfaceMask, region=None) -> Tuple[float, float]:
    """Surface/background contrast ratio and contrast-to-noise ratio.

    ``region`` (typically the visited voxels) restricts both classes so
    that never-insonified voxels do not pull the background down.
    """
    return _contrast_stats(vol, mask, region)[2:]


def completeness(vol: ScalarVolume, mask: SurfaceMask, threshold: float, region=None) -> float:
    """Fraction of surface voxels (within ``region``) at or above ``threshold``."""
    if not 0 < threshold < 255:
        raise ValueError(f"threshold must be in (0, 255), got {threshold}")
    check_same_meta(vol.meta, mask.meta)
    sel = mask.mask & _region(mask, region)
    n = int(sel.sum())
    if n == 0:
        raise EmptyRegion("surface mask is empty inside the evaluated region")
    return int((np.asarray(vol.data)[sel] >= threshold).sum()) / n


def otsu_threshold(vol: ScalarVolume, region=None) -> float:
    """Otsu threshold of the volume's intensities (restricted to ``region``)."""
    data = np.asarray(vol.data, dtype=np.float64)
    if region is not None:
        data = data[np.asarray(region, dtype=bool)]
    if data.size == 0:
        raise EmptyRegion("no voxels to threshold")
    if data.min() == data.max():
        raise ValueError("Otsu threshold is undefined for a constant volume")
    return float(threshold_otsu(data.ravel(), nbins=256))


def report(vol: ScalarVolume, mask: SurfaceMask, threshold: float, region=None) -> MetricsReport:
    ms, mb, cr, cnr = _contrast_stats(vol, mask, region)
    return MetricsReport(ms, mb, cr, cnr, completeness(vol, mask, threshold, region))


Named = Union[Mapping[str, ScalarVolume], Iterable[Tuple[str, ScalarVolume]]]


def compare(volumes: Named, mask: SurfaceMask, threshold: float, region=None) -> List[Tuple[str, MetricsReport]]:
    """One report per named volume, in the order given."""
    items: Sequence[Tuple[str, ScalarVolume]] = list(volumes.items() if isinstance(volumes, Mapping) else volumes)
    for _, v in items:
        check_same_meta(v.meta, mask.meta)
    return [(name, report(v, mask, threshold, region)) for name, v in items]
