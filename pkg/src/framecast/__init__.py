"""Video frame prediction with a progressively growing encoder-decoder GAN."""

__version__ = "0.1.0"

from .evaluation import (MetricsReport, copy_last_baseline, copylast_predictor,
                         evaluate, frame_metrics, long_term_predict)
from .flow import FlowParams, flow_to_color, optical_flow
from .losses import LossCoefficients, discriminator_loss, generator_loss, gradient_penalty
from .networks import (Discriminator, Generator, NetworkSpec, PhaseState,
                       build_discriminator, build_generator, grow)
from .trainer import (GrowthSchedule, OptimizerConfig, TrainConfig, Trainer,
                      alpha_at, build_schedule, generator_predictor,
                      load_checkpoint, load_generator, lr_for_level,
                      run_training, save_checkpoint)
from .videodata import (MovingMnistConfig, SequenceWindowing, VideoDataset,
                        blend_transition_input, count_windows,
                        downsample_to_resolution, generate_moving_mnist,
                        load_digit_glyphs, load_video_folder, upsample_nearest,
                        window_sequences)

__all__ = [
    "MetricsReport", "copy_last_baseline", "copylast_predictor", "evaluate",
    "frame_metrics", "long_term_predict",
    "FlowParams", "flow_to_color", "optical_flow",
    "LossCoefficients", "discriminator_loss", "generator_loss", "gradient_penalty",
    "Discriminator", "Generator", "NetworkSpec", "PhaseState",
    "build_discriminator", "build_generator", "grow",
    "GrowthSchedule", "OptimizerConfig", "TrainConfig", "Trainer", "alpha_at",
    "build_schedule", "generator_predictor", "load_checkpoint",
    "load_generator", "lr_for_level", "run_training", "save_checkpoint",
    "MovingMnistConfig", "SequenceWindowing", "VideoDataset",
    "blend_transition_input", "count_windows", "downsample_to_resolution",
    "generate_moving_mnist", "load_digit_glyphs", "load_video_folder",
    "upsample_nearest", "window_sequences",
]
