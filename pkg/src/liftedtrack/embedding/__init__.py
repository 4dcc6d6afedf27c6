"""Autoencoder embedding: layers, model assembly, and training."""

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    ReLU,
    Reshape,
    Upsample2x,
    xavier_uniform,
)
from .model import ArchConfig, AutoEncoder
from .training import (
    CentroidTable,
    EpochStats,
    TrainingConfig,
    TrainingDiverged,
    combined_loss,
    compute_centroids,
    gradient_check,
    latent_distance,
    reconstruction_loss,
    train,
)

__all__ = [
    "ArchConfig",
    "AutoEncoder",
    "BatchNorm",
    "CentroidTable",
    "Conv2D",
    "Dense",
    "EpochStats",
    "Flatten",
    "MaxPool2x2",
    "ReLU",
    "Reshape",
    "TrainingConfig",
    "TrainingDiverged",
    "Upsample2x",
    "combined_loss",
    "compute_centroids",
    "gradient_check",
    "latent_distance",
    "reconstruction_loss",
    "train",
    "xavier_uniform",
]
