"""Forecasting future feature representations with a mixture of regressors."""

from .nn import NetworkSpec, NetworkParams, OptimizerConfig
from .mixture import MixtureConfig, MixtureModel, train_alternating, predict_all
from .data import FeatureSequence, FramePair, SynthConfig, generate_synthetic, load_sequences, make_pairs

__all__ = [
    "NetworkSpec", "NetworkParams", "OptimizerConfig",
    "MixtureConfig", "MixtureModel", "train_alternating", "predict_all",
    "FeatureSequence", "FramePair", "SynthConfig", "generate_synthetic", "load_sequences", "make_pairs",
]
__version__ = "0.1.0"
