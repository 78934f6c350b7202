"""Builds the optional compiled scan-cycle kernel.

The package works without it (a pure-Python kernel is selected at import
time), so a failed extension build only costs speed.
"""

import os

from setuptools import Extension, setup

try:
    if not os.path.exists("src/cbi/runtime/_kernel.pyx"):
        raise ImportError
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cbi.runtime._kernel",
                ["src/cbi/runtime/_kernel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
