"""Backend selection for the compiled kernels.

Set ``DIFFVAR_DISABLE_JIT=1`` (or have numba missing) to run the pure-numpy
path. The flag is read once at import time.
"""

import os

_FLAG = os.environ.get("DIFFVAR_DISABLE_JIT", "").strip().lower()

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False

USE_JIT = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def backend_name():
    return "numba" if USE_JIT else "numpy"
