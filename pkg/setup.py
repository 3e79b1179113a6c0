"""Build the optional Cython kernels.

The package works without them: ``llmorderby._kernels`` falls back to a
pure-Python implementation when the extension is missing. Set
``LLMORDERBY_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LLMORDERBY_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "llmorderby._ckernels",
                    ["src/llmorderby/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
