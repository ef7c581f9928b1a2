import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "fxpmpc.fxp._kernels",
        ["src/fxpmpc/fxp/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

# The compiled kernels are an accelerator, not a requirement: the package
# falls back to the pure-Python twin at import time if the extension is
# missing, so a failed/skipped build still yields a working install.
if cythonize is not None:
    ext_modules = cythonize(extensions, language_level="3")
else:
    ext_modules = []

setup(ext_modules=ext_modules)
