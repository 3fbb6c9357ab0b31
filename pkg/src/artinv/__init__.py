"""Acoustic-to-articulatory inversion engine.

A conditioned autoregressive dilated-causal-convolution model over quantized
articulatory trajectories, trained by teacher forcing with exact hand-derived
gradients, decoded by matching naive and cached generators, and scored with
per-channel RMSE/correlation reports.
"""

from .frontend import (AudioClip, FrontendConfig, MelFilterbank, MelSpectrogram,
                       build_mel_filterbank, log_mel, stft)
from .generate import DecodeRule, GenerationError, decode, generate_cached, generate_naive, invert
from .metrics import MetricReport, aggregate, correlation, rmse
from .mixture import MixtureParams, dequantize, mixture_from_raw, mol_likelihood, quantize
from .model import ConfigError, NetworkConfig, NetworkParams, forward, gated_unit, receptive_field
from .trajectory import NormStats, TrajectorySet, denormalize, downsample, fit_norm_stats, normalize
from .training import TrainConfig, TrainItem, adam_step, backward, nll_loss, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "ConfigError", "DecodeRule", "FrontendConfig", "GenerationError",
    "MelFilterbank", "MelSpectrogram", "MetricReport", "MixtureParams",
    "NetworkConfig", "NetworkParams", "NormStats", "TrainConfig", "TrainItem",
    "TrajectorySet", "adam_step", "aggregate", "backward", "build_mel_filterbank",
    "correlation", "decode", "denormalize", "dequantize", "downsample",
    "fit_norm_stats", "forward", "gated_unit", "generate_cached", "generate_naive",
    "invert", "log_mel", "mixture_from_raw", "mol_likelihood", "nll_loss",
    "normalize", "quantize", "receptive_field", "rmse", "stft", "train",
]
