"""Bayesian inversion with Besov priors on the torus."""

__version__ = "0.1.0"
