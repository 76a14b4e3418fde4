"""hairadapt: strand-based 3D hairstyle retargeting.

Adapts a hairstyle authored for a source character to a target character by
constrained quadratic programming over particle positions, with a two-level
guide-hair hierarchy for speed and a physics-based embedded-membrane tool
for hairline edits.
"""

from .body import (
    BodyModel,
    Bone,
    PairReport,
    SurfacePoint,
    load_body,
    load_mesh_obj,
    load_skeleton_json,
    validate_pair,
)
from .config import AdaptationConfig, load_config, save_config
from .hair import HairFileError, Hairstyle, load_hairstyle, save_hairstyle

__all__ = [
    "AdaptationConfig",
    "BodyModel",
    "Bone",
    "HairFileError",
    "Hairstyle",
    "PairReport",
    "SurfacePoint",
    "load_body",
    "load_config",
    "load_hairstyle",
    "load_mesh_obj",
    "load_skeleton_json",
    "save_config",
    "save_hairstyle",
    "validate_pair",
]

__version__ = "0.1.0"
