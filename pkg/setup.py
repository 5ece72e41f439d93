"""Build hook for the optional compiled hashing kernel.

The package is pure Python unless Cython and a C compiler are available,
in which case ``tracesmith._hashcore`` is built and picked up at import
time by ``tracesmith.kernel``.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("tracesmith._hashcore", ["src/tracesmith/_hashcore.pyx"])],
        language_level=3,
        quiet=True,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
