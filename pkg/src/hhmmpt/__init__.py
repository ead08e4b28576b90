"""Hierarchical hidden Markov models for dive data, fitted by tempered Metropolis-Hastings."""

__version__ = "0.1.0"
