"""Sketch- and stroke-guided denoising diffusion with three user controls:
sketch faithfulness, stroke faithfulness and realism."""

from .schedule import NoiseSchedule, make_schedule
from .diffusion import (
    ConditionPair,
    ControlSettings,
    cfg_epsilon,
    ddpm_step,
    ilvr_refine,
    low_pass,
    q_sample,
    sample_loop,
)
from .unet import NetworkConfig, UNet, assemble_input, make_denoiser, timestep_embedding
from .conditions import (
    MaskSpec,
    TrainingTriplet,
    extract_sketch,
    extract_strokes,
    load_dataset,
    mask_condition,
)
from .training import TrainConfig, TrainState, init_state, train_stage, training_loss
from .metrics import (
    FeatureStats,
    FlattenEmbedder,
    default_embedder,
    feature_stats,
    frechet_distance,
    perceptual_distance,
)
from .service import SamplerBundle, bundle_from_checkpoint, create_app

__version__ = "0.1.0"

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "ConditionPair",
    "ControlSettings",
    "cfg_epsilon",
    "ddpm_step",
    "ilvr_refine",
    "low_pass",
    "q_sample",
    "sample_loop",
    "NetworkConfig",
    "UNet",
    "assemble_input",
    "make_denoiser",
    "timestep_embedding",
    "MaskSpec",
    "TrainingTriplet",
    "extract_sketch",
    "extract_strokes",
    "load_dataset",
    "mask_condition",
    "TrainConfig",
    "TrainState",
    "init_state",
    "train_stage",
    "training_loss",
    "FeatureStats",
    "FlattenEmbedder",
    "default_embedder",
    "feature_stats",
    "frechet_distance",
    "perceptual_distance",
    "SamplerBundle",
    "bundle_from_checkpoint",
    "create_app",
    "__version__",
]
