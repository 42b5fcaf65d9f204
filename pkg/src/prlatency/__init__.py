"""Predict first-response latency classes in GitHub pull requests."""

__version__ = "0.1.0"
