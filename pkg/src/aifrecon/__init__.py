"""Angle-weighted freehand 3D ultrasound reconstruction.

Submodules: ``geometry`` (poses, frames, voxel grids), ``mapprep``
(bone probability and gradient maps), ``recon`` (distribution and hole
filling), ``simulate`` (phantoms and synthetic sweeps), ``metrics`` and
``io`` (file formats, slice export); ``cli`` wires them together.
"""

from .geometry import FrameGeometry, RigidPose, VolumeMeta, make_beam_direction_map
from .mapprep import make_gradient_map, make_probability_map
from .recon import Frame, ReconConfig, TrackedFrameSet, distribute, fill_holes, reconstruct
from .volume import ScalarVolume, VectorVolume

__version__ = "0.1.0"

__all__ = [
    "FrameGeometry",
    "RigidPose",
    "VolumeMeta",
    "make_beam_direction_map",
    "make_probability_map",
    "make_gradient_map",
    "Frame",
    "TrackedFrameSet",
    "ReconConfig",
    "distribute",
    "fill_holes",
    "reconstruct",
    "ScalarVolume",
    "VectorVolume",
]
