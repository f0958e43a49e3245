"""Unsupervised two-domain feature alignment and cross-domain retrieval."""

from .data import (
    DomainDataset,
    FeatureRecord,
    SynthConfig,
    generate_synthetic,
    load_feature_file,
    split_train_test,
    write_feature_file,
)
from .estimator import DomainAlignedEncoder
from .trainer import Hyperparams, TrainState, train

__all__ = [
    "DomainAlignedEncoder",
    "DomainDataset",
    "FeatureRecord",
    "Hyperparams",
    "SynthConfig",
    "TrainState",
    "generate_synthetic",
    "load_feature_file",
    "split_train_test",
    "train",
    "write_feature_file",
]
