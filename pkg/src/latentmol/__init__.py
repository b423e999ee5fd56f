"""Latent-space molecular generation toolkit."""

__version__ = "0.1.0"
