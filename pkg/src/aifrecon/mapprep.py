"""Bone-surface probability and gradient maps from a label volume.

The surface estimator is emulated by filtering a binary bone label:
Sobel boundary magnitude, Gaussian blur, max normalisation. The
gradient map is the normalised Sobel gradient of that probability.
All filters replicate edge voxels at the borders.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .volume import ScalarVolume, VectorVolume

__all__ = [
    "DimsTooSmall",
    "SOBEL_DERIVATIVE",
    "SOBEL_SMOOTH",
    "sobel3d_axis",
    "boundary_magnitude",
    "gaussian_kernel",
    "gaussian3d",
    "max_normalize",
    "make_probability_map",
    "make_gradient_map",
]

SOBEL_DERIVATIVE = np.array([-1.0, 0.0, 1.0])
SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])

DEFAULT_SIGMA = 10.0
_ZERO_GRADIENT = 1e-12

_AXES = {"x": 0, "y": 1, "z": 2}


class DimsTooSmall(ValueError):
    pass


def _axis_number(axis) -> int:
    if isinstance(axis, str):
        try:
            return _AXES[axis.lower()]
        except KeyError:
            raise ValueError(f"axis must be one of x, y, z; got {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2; got {axis!r}")
    return int(axis)


def _sobel(arr: np.ndarray, axis: int) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    for ax in range(3):
        weights = SOBEL_DERIVATIVE if ax == axis else SOBEL_SMOOTH
        out = ndimage.correlate1d(out, weights, axis=ax, mode="nearest")
    return out


def sobel3d_axis(vol: ScalarVolume, axis) -> ScalarVolume:
    """Signed 27-tap Sobel derivative along ``axis`` (0/1/2 or "x"/"y"/"z").

    Correlates with (-1, 0, 1) along ``axis`` and (1, 2, 1) along the
    other two, so the output is positive where values increase.
    """
    if min(vol.meta.dims) < 3:
        raise DimsTooSmall(f"Sobel filtering needs at least 3 voxels per axis, got {vol.meta.dims}")
    return vol.like(_sobel(vol.data, _axis_number(axis)))


def _gradient(arr: np.ndarray) -> np.ndarray:
    return np.stack([_sobel(arr, ax) for ax in range(3)], axis=-1)


def boundary_magnitude(label: ScalarVolume) -> ScalarVolume:
    if min(label.meta.dims) < 3:
        raise DimsTooSmall(f"Sobel filtering needs at least 3 voxels per axis, got {label.meta.dims}")
    g = _gradient(label.data)
    return label.like(np.sqrt(g[..., 0] ** 2 + g[..., 1] ** 2 + g[..., 2] ** 2))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian of radius ceil(3 sigma), normalised to sum 1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian3d(vol: ScalarVolume, sigma: float) -> ScalarVolume:
    k = gaussian_kernel(sigma)
    out = np.asarray(vol.data, dtype=np.float64)
    for ax in range(3):
        out = ndimage.correlate1d(out, k, axis=ax, mode="nearest")
    return vol.like(out)


def max_normalize(vol: ScalarVolume) -> ScalarVolume:
    data = np.asarray(vol.data, dtype=np.float64)
    peak = data.max() if data.size else 0.0
    if not peak > 0:
        return vol.like(np.zeros_like(data))
    return vol.like(np.clip(data / peak, 0.0, 1.0))


def make_probability_map(label: ScalarVolume, sigma: float = DEFAULT_SIGMA) -> ScalarVolume:
    """Emulated bone-surface probability in [0, 1] from a binary label."""
    return max_normalize(gaussian3d(boundary_magnitude(label), sigma))


def make_gradient_map(prob: ScalarVolume) -> VectorVolume:
    """Unit gradient of the probability map (towards increasing probability).

    Near-zero gradients become exact zero vectors, which later yields a
    zero angle weight for voxels with no surface evidence.
    """
    if min(prob.meta.dims) < 3:
        raise DimsTooSmall(f"Sobel filtering needs at least 3 voxels per axis, got {prob.meta.dims}")
    g = _gradient(prob.data)
    mag = np.sqrt(g[..., 0] ** 2 + g[..., 1] ** 2 + g[..., 2] ** 2)
    keep = mag >= _ZERO_GRADIENT
    out = np.zeros_like(g)
    out[keep] = g[keep] / mag[keep, None]
    return VectorVolume(prob.meta, out)
