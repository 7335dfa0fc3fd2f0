"""Build script: compiles the optional speedup extension when Cython and a C
compiler are available.  Set FORETUNE_NO_EXT=1 to force a pure-Python install;
the package selects the fallback kernels automatically when the extension is
missing."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("FORETUNE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/foretune/kernels/_speedups.pyx"],
            language_level="3",
            compiler_directives={"boundscheck": False, "wraparound": False},
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
