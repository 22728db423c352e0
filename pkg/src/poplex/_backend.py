"""Kernel backend selection.

The compiled kernels (Cython) are preferred; the pure-Python twins are
used when the extensions were not built or POPLEX_PURE_PYTHON=1 is set.
Walk corpora are bit-identical across backends.  Trained embeddings are
not bit-identical across backends (float summation order differs) but are
deterministic within a backend for a fixed seed and worker count of 1.
"""

from __future__ import annotations

import os

from . import _pysgns, _pywalk

_FORCE_PYTHON = os.environ.get("POPLEX_PURE_PYTHON", "") == "1"

walk_kernel = _pywalk
sgns_kernel = _pysgns

if not _FORCE_PYTHON:
    try:
        from ._native import _sgns as _native_sgns
        from ._native import _walk as _native_walk

        walk_kernel = _native_walk
        sgns_kernel = _native_sgns
    except ImportError:
        pass


def active_backend() -> str:
    """'native' when the compiled kernels are in use, else 'python'."""
    return walk_kernel.BACKEND_NAME
