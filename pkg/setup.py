"""Build the optional compiled training kernels.

The package works without the extension: ``vpet._backend`` falls back to the
pure-numpy kernels when ``vpet._kernels`` is missing or fails to import.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        name="vpet._kernels",
        sources=["src/vpet/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
