"""Latent-representation toolkit for high-speed signal anomaly detection
and eye-diagram-verified signal integrity enhancement."""

__version__ = "0.1.0"
