"""Byzantine-resilient distributed SGD with reputation-score aggregation."""

__version__ = "0.1.0"
