"""Build the optional compiled LSTM kernels.

If Cython, numpy, scipy headers or a C compiler are missing, the package still
installs and falls back to the pure-numpy kernels at import time.
"""
import platform
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    # -ffast-math lets gcc turn the gate loops into calls to glibc's vector
    # math library (libmvec), which is several times faster than scalar tanh
    libraries = ["mvec", "m"] if platform.libc_ver()[0] == "glibc" else []
    ext = Extension(
        "unkadf.nn._kernels",
        ["src/unkadf/nn/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffast-math"],
        libraries=libraries,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
