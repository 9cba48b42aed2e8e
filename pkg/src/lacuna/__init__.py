"""Lacuna: topology-driven detection and generative repair of gaps in molecular datasets."""

__version__ = "0.1.0"
