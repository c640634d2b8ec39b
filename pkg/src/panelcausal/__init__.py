"""Causal structure learning and Bayesian-network queries on country-by-day panels."""

__version__ = "0.1.0"
