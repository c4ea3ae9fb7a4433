"""Time-domain source separation with multi-scale fused dual-path separators."""

from .chunking import ChunkSpec, ChunkTensor, overlap_add, segment
from .config import (
    PRESETS,
    RunConfig,
    SeparatorConfig,
    TrainConfig,
    load_run_config,
    preset,
    save_run_config,
)
from .network import SeparationModel, count_parameters
from .objective import (
    improvement,
    mse_pit_loss,
    pit_loss,
    sdr,
    sdr_improvement,
    si_snr,
    si_snr_improvement,
)
from .signals import (
    Waveform,
    generate_dataset,
    load_manifest,
    load_wav,
    mix_at_snr,
    mix_sources,
    save_wav,
    synth_source,
)
from .trainer import evaluate, separate, train

__version__ = "0.1.0"

__all__ = [
    "ChunkSpec",
    "ChunkTensor",
    "PRESETS",
    "RunConfig",
    "SeparationModel",
    "SeparatorConfig",
    "TrainConfig",
    "Waveform",
    "count_parameters",
    "evaluate",
    "generate_dataset",
    "improvement",
    "load_manifest",
    "load_run_config",
    "load_wav",
    "mix_at_snr",
    "mix_sources",
    "mse_pit_loss",
    "overlap_add",
    "pit_loss",
    "preset",
    "save_run_config",
    "save_wav",
    "sdr",
    "sdr_improvement",
    "segment",
    "separate",
    "si_snr",
    "si_snr_improvement",
    "synth_source",
    "train",
]
