"""Build the optional Cython kernels; the package falls back to numpy without them."""

import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("MVSFUSE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "mvsfuse._ckernels",
                    ["src/mvsfuse/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # noqa: BLE001
        print(f"mvsfuse: building without compiled kernels ({exc})", file=sys.stderr)
        ext_modules = []

setup(ext_modules=ext_modules)
