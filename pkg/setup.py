import os

from setuptools import setup

ext_modules = []
if os.environ.get("OPTGEO_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("optgeo._speedups", ["src/optgeo/_speedups.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # pure-Python fallback in optgeo._pykernels is used at import
        ext_modules = []

setup(ext_modules=ext_modules)
