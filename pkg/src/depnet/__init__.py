"""Bayesian feedforward networks with dependent, per-neuron-variance weights."""

__version__ = "0.1.0"
