"""Build script.

The compiled kernel is optional: if Cython or a C toolchain is missing the
package installs anyway and falls back to the NumPy implementation of the
same routines at import time.
"""

import os

from setuptools import setup

PYX = "src/rcbfsim/_kernels/_fast.pyx"

ext_modules = []
if os.environ.get("RCBFSIM_SKIP_EXT", "0") != "1" and os.path.exists(PYX):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "rcbfsim._kernels._fast",
                    [PYX],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
