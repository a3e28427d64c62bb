"""Greedy f-divergence kernel mixtures, submodularity checks and diverse MLP ensembles."""

__version__ = "0.1.0"
