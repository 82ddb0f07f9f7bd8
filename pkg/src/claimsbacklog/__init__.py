"""Backlog dynamics, expectation formulas and capacity optimisation for a
claims-handling unit with stochastic reporting and constant capacity."""

from .stochastics import ModelConfig, RngState

__all__ = ["ModelConfig", "RngState"]
__version__ = "0.1.0"
