"""Recurrent sequence nets approximating the g/h expectation sequences."""

from .datasets import Dataset, build_dataset_g, build_dataset_h
from .network import SequenceNet, gradient_check
from .training import TrainConfig, TrainResult, new_net, train

__all__ = ["Dataset", "SequenceNet", "TrainConfig", "TrainResult", "build_dataset_g", "build_dataset_h",
           "gradient_check", "new_net", "train"]
