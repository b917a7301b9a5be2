import os
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext

ext_modules = []
if not os.environ.get("QSPHERE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "qsphere._kernels",
                    ["src/qsphere/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError as exc:
        warnings.warn(f"building without compiled kernels: {exc}")


class OptionalBuildExt(build_ext):
    """Fall back to the pure-Python kernels when compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            warnings.warn(f"compiled kernels unavailable: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"failed to build {ext.name}: {exc}")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
