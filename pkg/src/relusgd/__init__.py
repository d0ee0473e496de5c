"""Noise-injected SGD for two-layer ReLU networks on linearly separable data."""
from .network import (Dataset, Network, Sample, default_second_layer, empirical_loss,
                      forward, hinge, leaky_forward, predict, subgradient, training_error)
from .trainer import TrainConfig, TrainReport, run, train

__all__ = [
    "Dataset", "Network", "Sample", "TrainConfig", "TrainReport", "default_second_layer",
    "empirical_loss", "forward", "hinge", "leaky_forward", "predict", "run", "subgradient",
    "train", "training_error",
]
__version__ = "0.1.0"
