"""Builds the optional ``meshqs._ckernels`` extension.

Without Cython or a C compiler the package still installs and runs on the
pure-Python kernels.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        "src/meshqs/_ckernels.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
        },
    )

setup(ext_modules=ext_modules)
