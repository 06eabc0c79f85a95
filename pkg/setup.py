"""Build script: compiles the optional Cython hot-kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only emits a warning.
"""

import sys

from setuptools import Extension, setup


def _extensions():
    import os

    if not os.path.exists("src/rcmlab/_core.pyx"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"rcmlab: skipping extension build ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "rcmlab._core",
        ["src/rcmlab/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
