"""Kernel dispatch: compiled Cython kernels when built, numpy fallback otherwise.

Set ``MVSFUSE_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("MVSFUSE_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

gather_bilinear = _impl.gather_bilinear
sweep_sq_diff = _impl.sweep_sq_diff

__all__ = ["BACKEND", "gather_bilinear", "sweep_sq_diff"]
