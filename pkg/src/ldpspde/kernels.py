"""Kernel selection: the compiled extension when available, numpy otherwise.

Set ``LDPSPDE_PURE_PYTHON=1`` to force the numpy implementations.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
linear_recurrence = _fallback.linear_recurrence
apply_saturated_jumps = _fallback.apply_saturated_jumps

if os.environ.get("LDPSPDE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        linear_recurrence = _kernels.linear_recurrence
        apply_saturated_jumps = _kernels.apply_saturated_jumps

__all__ = ["BACKEND", "linear_recurrence", "apply_saturated_jumps"]
