"""Proxy-identified dynamic factor models and their Monte Carlo comparison with Proxy VARs."""

__version__ = "0.1.0"
