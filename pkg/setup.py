"""Builds the optional Cython urn kernels; the package works without them."""
import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("TWOSTAGE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension("twostage._urn", ["src/twostage/_urn.pyx"],
                    extra_compile_args=["-O3"], optional=True)
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
