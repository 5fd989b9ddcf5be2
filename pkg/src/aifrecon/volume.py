"""Scalar and vector voxel volumes.

Arrays are indexed ``[x, y, z]`` with shape ``meta.dims``; flattening
with ``order="F"`` yields the x-fastest storage order used on disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import VolumeMeta

__all__ = ["ScalarVolume", "VectorVolume", "MetaMismatch", "check_same_meta"]


class MetaMismatch(ValueError):
    """Volumes that must share a grid do not."""


@dataclass
class ScalarVolume:
    meta: VolumeMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.shape != self.meta.dims:
            raise MetaMismatch(f"data shape {self.data.shape} does not match dims {self.meta.dims}")

    @classmethod
    def zeros(cls, meta: VolumeMeta, dtype=np.float64) -> "ScalarVolume":
        return cls(meta, np.zeros(meta.dims, dtype=dtype))

    def like(self, data: np.ndarray) -> "ScalarVolume":
        return ScalarVolume(self.meta, data)

    def flat(self) -> np.ndarray:
        """Values in x-fastest order."""
        return self.data.ravel(order="F")


@dataclass
class VectorVolume:
    """Per-voxel 3-vectors, array shape ``meta.dims + (3,)``."""

    meta: VolumeMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.shape != self.meta.dims + (3,):
            raise MetaMismatch(f"data shape {self.data.shape} does not match dims {self.meta.dims} x 3")

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=-1)


def check_same_meta(*metas: VolumeMeta) -> None:
    first = metas[0]
    for other in metas[1:]:
        if other != first:
            raise MetaMismatch(f"volume grids differ: {first} vs {other}")
