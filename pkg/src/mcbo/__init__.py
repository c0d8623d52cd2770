"""Model-based causal Bayesian optimization."""

__version__ = "0.1.0"
