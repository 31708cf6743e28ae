"""Computer-aided detection of mandibular lesions in dental CT volumes.

Two per-slice detectors feed a 3D clustering stage:

* close-border lesions: enclosed dark holes of the denoised bone mask,
  classified by a small MLP on 15 texture and shape features
* open-border lesions: gaps in the bone outline found by subtracting a
  small morphological closing from a large one

Synthetic phantoms with exact ground truth and FROC evaluation are included.
"""
from .config import Settings, load_settings, parse_settings
from .detect import VolumeDetections, detect_slice, detect_slices, detect_volume
from .errors import (
    ContractError,
    DegenerateInputError,
    EmptyPoolError,
    FormatError,
    OralCadError,
    SpecError,
    TrainingError,
    UndefinedMetricError,
)
from .eval3d import (
    Detection2D,
    FrocPoint,
    GroundTruthLesion,
    LesionCluster,
    MatchCounts,
    cluster_detections,
    froc_curve,
    match,
)
from .mlp import MlpModel, TrainingConfig, load_model, save_model, train
from .phantom import LesionSpec, PhantomSpec, generate_phantom, random_spec
from .volume_io import CtVolume, VoxelSpacing, load_raw_volume, save_raw_volume

__version__ = "0.1.0"
