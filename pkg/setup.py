"""Build script for the optional compiled voxel kernels.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so compilation failures are downgraded to a warning
instead of aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython kernels if a toolchain is available, else skip."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler, no Cython, etc.
            warnings.warn(f"skipping compiled kernels ({exc}); "
                          "segalarm will use the NumPy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping {ext.name} ({exc}); "
                          "segalarm will use the NumPy fallback")


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "segalarm.volumetric._kernels",
        ["src/segalarm/volumetric/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
