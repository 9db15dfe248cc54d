"""Genetic-algorithm search over 1-D retina network topologies."""

__version__ = "0.1.0"
