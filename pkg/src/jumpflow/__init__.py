"""Variable-length sequence generation by interleaved flow-matching denoising
and stochastic frame insertion."""

from .config import LossConfig, RunConfig, TrainConfig, load_config, parse_config
from .fields import ContextFrame, ContextSpec, FieldOutput, first_frame, interpolation, prefix, unconditional
from .frames import FrameSeq, FrameState, TimeState, clip_time, frame_state, strip
from .losses import LossReport, insertion_loss, pending_counts, total_loss, velocity_loss
from .net import NetConfig, ReferenceNet
from .oracle import ConditionalOracle, OracleRateModel, oracle_rate_scaled
from .sampler import SampleTrace, SamplerConfig, generate, rate_cfg, time_warp
from .schedule import GlobalTimeDist, Scheduler, TrainingTimes, sample_training_times

__all__ = [
    "ConditionalOracle",
    "ContextFrame",
    "ContextSpec",
    "FieldOutput",
    "FrameSeq",
    "FrameState",
    "GlobalTimeDist",
    "LossConfig",
    "LossReport",
    "NetConfig",
    "OracleRateModel",
    "ReferenceNet",
    "RunConfig",
    "SampleTrace",
    "SamplerConfig",
    "Scheduler",
    "TimeState",
    "TrainConfig",
    "TrainingTimes",
    "clip_time",
    "first_frame",
    "frame_state",
    "generate",
    "insertion_loss",
    "interpolation",
    "load_config",
    "oracle_rate_scaled",
    "parse_config",
    "pending_counts",
    "prefix",
    "rate_cfg",
    "sample_training_times",
    "strip",
    "time_warp",
    "total_loss",
    "unconditional",
    "velocity_loss",
]
