"""Build script: compiles the Cython kernel core when Cython is available.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so a missing Cython merely skips the compiled core.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gfmstream._kernels_cy",
                ["src/gfmstream/_kernels_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
