import os

import numpy as np
from setuptools import Extension, setup

# The compiled core is optional: without Cython (or a compiler) the package
# falls back to the pure-Python kernels at import time.
try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("MDSAMPLER_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "mdsampler._core",
                ["src/mdsampler/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
