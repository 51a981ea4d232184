"""Fuzzy granulation and degranulation with an augmented reconstruction scheme."""

from .augmented import AugmentedModel, augmented_reconstruct, load_model
from .data import RawDataset, load_csv, synth_gaussian, zscore
from .evaluation import ExperimentConfig, grid_search, reconstruction_error
from .fcm import FcmConfig, FcmResult, fcm_fit
from .granulation import degranulate, granulate

__version__ = "0.1.0"

__all__ = [
    "AugmentedModel",
    "ExperimentConfig",
    "FcmConfig",
    "FcmResult",
    "RawDataset",
    "augmented_reconstruct",
    "degranulate",
    "fcm_fit",
    "granulate",
    "grid_search",
    "load_csv",
    "load_model",
    "reconstruction_error",
    "synth_gaussian",
    "zscore",
]
