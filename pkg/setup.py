"""Build script: compiles the Cython kernel extension when possible.

The package works without the extension (a pure-Python fallback is
selected at import time), so a failed compile only costs speed.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/lobexec/_kernels.pyx",
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    import sys

    print(f"lobexec: skipping Cython extension ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
