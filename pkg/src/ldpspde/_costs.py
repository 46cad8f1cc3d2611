from __future__ import annotations

import numpy as np

from .errors import DomainError


def ell(r):
    """``ℓ(r) = r ln r - r + 1`` with ``ℓ(0) = 1``; scalar in, float out."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("ell is defined for r >= 0 only")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr > 0, arr * np.log(np.where(arr > 0, arr, 1.0)) - arr + 1.0, 1.0)
    return float(out) if out.ndim == 0 else out
