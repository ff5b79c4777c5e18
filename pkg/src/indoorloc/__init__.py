"""Indoor camera localization from single RGB images.

Three trainable stages glued into one pipeline: a scene classifier picks
which room segment the image shows, a conditional U-Net GAN translates the
RGB view into the matching point-cloud rendering, and a per-scene CNN
regresses the 7-value camera pose (position + orientation quaternion).
A procedural room generator produces the paired RGB / point-cloud training
data with exact pose labels, so the whole pipeline trains and verifies at
desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    DatasetError,
    DegenerateQuaternionError,
    EmptyDatasetError,
    RegistryError,
)
from .geometry import Pose, PoseLossSpec, SceneBounds

__all__ = [
    "CapacityError",
    "ConfigError",
    "DatasetError",
    "DegenerateQuaternionError",
    "EmptyDatasetError",
    "Pose",
    "PoseLossSpec",
    "RegistryError",
    "SceneBounds",
    "__version__",
]
