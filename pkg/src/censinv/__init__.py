"""Inventory control under hidden Markov-modulated demand with censored observations.

Modules
-------
model      problem instances, censoring, mark likelihoods
markov     belief flow between arrivals
filter     exact filter, event logs, discretized oracle
grid       simplex lattice with barycentric interpolation
solver     value surface by forward dynamic programming
policy     decision rules and heuristics
simulator  sample paths and Monte Carlo policy costs
cli        command-line entry point
"""
from .model import Censoring, Mark, ModelError, ModelSpec, load_model, save_model, validate

__all__ = ["Censoring", "Mark", "ModelError", "ModelSpec", "load_model", "save_model",
           "validate"]
__version__ = "0.1.0"
