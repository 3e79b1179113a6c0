"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

``LLMORDERBY_PURE=1`` forces the fallback. ``BACKEND`` names the active one.
"""

import os
from array import array

from . import _pykernels

if os.environ.get("LLMORDERBY_PURE"):
    _impl = None
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = None

BACKEND = "cython" if _impl is not None else "python"


def _doubles(values):
    return array("d", (float(v) for v in values))


def pair_counts(x, y):
    if _impl is None:
        return _pykernels.pair_counts(list(x), list(y))
    return _impl.pair_counts(_doubles(x), _doubles(y))


def dcg(grades, k):
    if _impl is None:
        return _pykernels.dcg([float(g) for g in grades], k)
    return _impl.dcg(_doubles(grades), k)
