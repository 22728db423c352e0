"""Build script for the optional compiled kernels.

The walk generator and the skip-gram trainer have compiled (Cython) cores.
If the toolchain is unavailable the install still succeeds and the package
falls back to the pure-Python kernels at import time (see poplex._backend).
Set POPLEX_BUILD_EXT=0 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

extensions = []
if os.environ.get("POPLEX_BUILD_EXT", "1") != "0":
    try:
        import numpy as np
        from Cython.Build import cythonize

        extensions = cythonize(
            [
                Extension(
                    "poplex._native._walk",
                    sources=["src/poplex/_native/_walk.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    optional=True,
                ),
                Extension(
                    "poplex._native._sgns",
                    sources=["src/poplex/_native/_sgns.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffast-math"],
                    optional=True,
                ),
            ],
            language_level=3,
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
