"""Build script: compiles the optional Cython warp kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed or skipped compilation is not an error.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("GEOCERT_SKIP_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "geocert._kernels.warpcore",
        sources=["src/geocert/_kernels/warpcore.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
