"""Sparse additive nonlinear VAR: simulation, functional group lasso, evaluation."""

__version__ = "0.1.0"
