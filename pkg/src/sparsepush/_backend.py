"""Select the kernel backend at import time.

The compiled extension is used when it was built; otherwise the numpy
fallback is used. ``SPARSEPUSH_BACKEND=python`` forces the fallback and
``SPARSEPUSH_BACKEND=cython`` makes a missing extension an error.
"""

from __future__ import annotations

import os

from . import _pykernels

_choice = os.environ.get("SPARSEPUSH_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _pykernels
elif _choice in ("auto", "cython"):
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _pykernels
else:
    raise ImportError(f"SPARSEPUSH_BACKEND must be auto, python or cython, got {_choice!r}")

BACKEND: str = kernels.NAME


def available_backends() -> dict[str, object]:
    """Every importable backend keyed by name, for tests and benchmarks."""
    found: dict[str, object] = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
