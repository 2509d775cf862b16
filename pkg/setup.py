import os

import numpy as np
from setuptools import Extension, setup

# HYDROGRAD_DISABLE_EXT=1 installs the pure-Python backend only.
ext_modules = []
if not os.environ.get("HYDROGRAD_DISABLE_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hydrograd.hydro._kernels_cy",
                ["src/hydrograd/hydro/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
