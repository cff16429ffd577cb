"""Count-aware maximum-likelihood vote aggregation under a bandit noise model."""

__version__ = "0.1.0"
