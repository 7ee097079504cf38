"""Follow-up X-ray inspection of PCB solder joints.

Pipeline: synthetic/parsed AXI data -> channel-wise preprocessing ->
3D-CNN / LSTM classifiers -> ROC threshold selection -> triage service.
"""

from .ingest import DatasetManifest, JointRecord, Roi
from .metrics import EvalReport, build_report, select_threshold, workload_report
from .models import Checkpoint, ModelSpec, load_checkpoint, save_checkpoint
from .preprocess import Patch, compute_crop, extract_patch
from .synth import SynthConfig, generate_synthetic
from .tensor import GradTape, Tensor
from .training import TrainConfig, train_on_patches

__all__ = [
    "Checkpoint",
    "DatasetManifest",
    "EvalReport",
    "GradTape",
    "JointRecord",
    "ModelSpec",
    "Patch",
    "Roi",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "build_report",
    "compute_crop",
    "extract_patch",
    "generate_synthetic",
    "load_checkpoint",
    "save_checkpoint",
    "select_threshold",
    "train_on_patches",
    "workload_report",
]

__version__ = "0.1.0"
