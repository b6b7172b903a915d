"""Build script for the optional compiled kernel.

The package works without the extension (a pure numpy fallback is selected at
import time); building it just makes the grid motion update fast enough for
real-time rates. -ffp-contract=off keeps the compiled arithmetic bit-identical
to the numpy fallback (no FMA contraction).
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "curtainsim.kernels._ckernels",
                ["src/curtainsim/kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
