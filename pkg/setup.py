"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a pure-Python
backend is selected at import time), so a failed compile only costs
speed. `pip install -e . --no-build-isolation` is the supported path.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build environment without Cython
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "vsmtune._kernels._speedups",
                ["src/vsmtune/_kernels/_speedups.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
