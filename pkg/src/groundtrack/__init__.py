"""Multi-camera people tracking on a fused ground-plane occupancy map.

The pipeline: per-view ground-point heatmaps are warped onto a shared
ground grid, fused, scanned for local maxima, filtered by a temporal
patch classifier, and linked frame-to-frame by a min-cost max-flow
association step.  A synthetic multi-camera simulator and a full MOT
metrics suite close the loop for evaluation.
"""

__version__ = "0.1.0"

from .geometry import CameraCalibration, GroundGrid, Homography
from .heatmap import FocalLossParams, GroundTruthLabel, OccupancyMap
from .fusion import FusedMap, ViewHeatmapSet

__all__ = [
    "CameraCalibration",
    "GroundGrid",
    "Homography",
    "OccupancyMap",
    "FocalLossParams",
    "GroundTruthLabel",
    "ViewHeatmapSet",
    "FusedMap",
    "__version__",
]
