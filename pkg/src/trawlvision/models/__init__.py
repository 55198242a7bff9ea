from .backbone import ResNet
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ARCHITECTURES, ModelConfig, desk_config, reference_config
from .inputs import clip_input, padding_mask, preprocess_frames, spatial_input, temporal_input
from .networks import (HybridTransformer, SpatialCNN, TemporalCNN, TimeSformer, TwoStream, build_model,
                       count_parameters, fuse_two_stream, parameter_shapes)

__all__ = [
    "ARCHITECTURES", "HybridTransformer", "ModelConfig", "ResNet", "SpatialCNN", "TemporalCNN", "TimeSformer",
    "TwoStream", "build_model", "clip_input", "count_parameters", "desk_config", "fuse_two_stream",
    "load_checkpoint", "padding_mask", "reference_config", "parameter_shapes", "preprocess_frames",
    "save_checkpoint", "spatial_input", "temporal_input",
]
