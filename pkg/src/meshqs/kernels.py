"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``MESHQS_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MESHQS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

edit_distance = _impl.edit_distance
count_pairs = _impl.count_pairs
merge_pair = _impl.merge_pair
apply_merges = _impl.apply_merges


def backends():
    """Map of backend name to module for every backend that imports."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
