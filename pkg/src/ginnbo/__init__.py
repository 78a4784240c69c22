"""Bayesian optimization with a gradient-informed Bayesian neural network surrogate."""

__version__ = "0.1.0"
