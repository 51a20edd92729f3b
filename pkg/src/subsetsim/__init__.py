"""Subset Simulation with a Bayesian post-processor for rare-event probabilities."""

__version__ = "0.1.0"
