"""Event-guided adaptive token sparsification for RGB-event feature extraction."""

from .egms import EGCMParams, SparsificationMap
from .events import (Event, EventStream, SensorGeometry, VoxelGrid,
                     event_spatial_ratio, validate_stream, voxelize)
from .pipeline import ModelConfig, PipelineWeights, StageOutput, init_weights, run_backbone
from .synth import SynthScene, synth_scene, synth_suite
from .tokens import StageConfig, TokenGrid

__all__ = [
    "EGCMParams", "SparsificationMap", "Event", "EventStream", "SensorGeometry",
    "VoxelGrid", "event_spatial_ratio", "validate_stream", "voxelize",
    "ModelConfig", "PipelineWeights", "StageOutput", "init_weights",
    "run_backbone", "SynthScene", "synth_scene", "synth_suite",
    "StageConfig", "TokenGrid",
]

__version__ = "0.1.0"
