"""Multiplex population-network embeddings: layer-aware walks, skip-gram
training, temporal alignment, whitened Fibonacci-grid partitioning, sample
audits, and downstream probes."""

from ._backend import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
