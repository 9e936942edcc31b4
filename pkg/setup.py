"""Build script.

The compiled kernel extension is optional: if Cython (or a C++ toolchain) is
missing, the package installs anyway and falls back to the pure-Python kernel
implementations at import time.  Set IPSLAB_REQUIRE_EXT=1 to make a failed
extension build abort the install instead.
"""

import os
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            "src/ipslab/_kernels/_compiled.pyx",
        ],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
        ext.language = "c++"
        if sys.platform != "win32":
            # -ffp-contract=off keeps the extension's float arithmetic
            # bit-identical to the pure-Python kernels (no fused multiply-add).
            ext.extra_compile_args = ["-O2", "-std=c++11", "-ffp-contract=off"]
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    if os.environ.get("IPSLAB_REQUIRE_EXT"):
        raise
    sys.stderr.write(f"ipslab: building without compiled kernels ({exc})\n")
    ext_modules = []

setup(ext_modules=ext_modules)
