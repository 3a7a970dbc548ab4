import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# CNE_PORTABLE=1 drops -march=native for redistributable builds.
arch = [] if os.environ.get("CNE_PORTABLE") else ["-march=native"]
wide = [] if os.environ.get("CNE_PORTABLE") else ["-mprefer-vector-width=512"]
common = dict(
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

ext_modules = []
if cythonize is not None and not os.environ.get("CNE_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension("cne._conv", sources=["src/cne/_conv.pyx"],
                      extra_compile_args=["-O3", *arch, *wide], **common),
            # contraction off: reductions must round exactly like the numpy fallback
            Extension("cne._stats", sources=["src/cne/_stats.pyx"],
                      extra_compile_args=["-O3", *arch, "-ffp-contract=off"], **common),
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
