"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the extension accelerates the hot integration
kernels by roughly two orders of magnitude.

Build in place with:

    python setup.py build_ext --inplace

Set SURVEVAL_NO_EXT=1 to skip the extension entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SURVEVAL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "surveval._kernels._core",
                    ["src/surveval/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
