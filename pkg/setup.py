"""Build script for the optional compiled kernels.

The package works without the extension: threatflow.kernels falls back to
the pure-Python implementations when the compiled module is missing.
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
                "threatflow.kernels._ckernels",
                ["src/threatflow/kernels/_ckernels.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
