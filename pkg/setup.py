"""Build the optional compiled integration kernel.

The package works without it: ``saddleflow.kernels`` falls back to a
pure-Python implementation with identical arithmetic when the extension
is missing.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SADDLEFLOW_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "saddleflow._ckernel",
                    ["src/saddleflow/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction / fast-math: results must match the
                    # pure-Python fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
