"""Build script: compiles the optional Cython geometry core.

Set HRCPLAN_NO_EXT=1 to skip the extension entirely; the package then runs
on the pure-Python kernels.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("HRCPLAN_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/hrcplan/_kernels/_fastgeom.pyx",
            language_level="3",
        )
        for ext in ext_modules:
            ext.include_dirs.append(np.get_include())
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
