import os

from setuptools import setup

# The compiled kernels are optional: the package falls back to a pure-numpy
# backend when the extension is missing. Set ANTIDOTE_REC_PURE=1 to skip the
# build entirely (e.g. on a machine without a C compiler).
ext_modules = []
if not os.environ.get("ANTIDOTE_REC_PURE"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "antidote_rec._kernels._core",
                    ["src/antidote_rec/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
