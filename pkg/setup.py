"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure NumPy/Python fallback is
selected at import time), so a missing compiler or Cython only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    # -ffp-contract=off keeps the compiled recurrences bit-identical to the
    # pure-Python fallback (no FMA contraction); -ffast-math is deliberately
    # avoided for the same reason.
    extensions = cythonize(
        [
            Extension(
                "rstrader.kernels._fast",
                ["src/rstrader/kernels/_fast.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "embedsignature": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
