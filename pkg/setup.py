import numpy as np
from setuptools import setup

# The compiled sweep kernel is optional: if Cython or a C compiler is
# unavailable the package falls back to the pure-NumPy kernels at import.
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "snrom.sweep._kernels",
                ["src/snrom/sweep/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception:
    extensions = []

setup(ext_modules=extensions)
