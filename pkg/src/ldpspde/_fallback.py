"""Pure-numpy implementations of the compiled kernels (same signatures and results)."""
from __future__ import annotations

import numpy as np


def linear_recurrence(y0, decay, inc):
    y0 = np.asarray(y0, dtype=float)
    decay = np.asarray(decay, dtype=float)
    inc = np.asarray(inc, dtype=float)
    P, n = y0.shape
    K = decay.shape[0]
    if decay.shape != (K, n) or inc.shape != (P, K, n):
        raise ValueError("shape mismatch in linear_recurrence")
    out = np.empty((P, K + 1, n))
    out[:, 0] = y0
    for k in range(K):
        out[:, k + 1] = decay[k] * out[:, k] + inc[:, k]
    return out


def apply_saturated_jumps(y, d, paths, amps, eps, cap):
    """Sequential saturated jumps, vectorized across paths.

    The ``r``-th jump of every path is applied in one numpy pass, for ``r = 0, 1, ...``;
    the order within a path is the order in ``paths``.
    """
    paths = np.asarray(paths, dtype=np.int64)
    amps = np.asarray(amps, dtype=float)
    if paths.size == 0:
        return
    if amps.shape != paths.shape or d.shape[0] != y.shape[1]:
        raise ValueError("shape mismatch in apply_saturated_jumps")
    if paths.min() < 0 or paths.max() >= y.shape[0]:
        raise IndexError("jump path index out of range")
    order = np.argsort(paths, kind="stable")
    sp = paths[order]
    starts = np.flatnonzero(np.r_[True, sp[1:] != sp[:-1]])
    counts = np.diff(np.r_[starts, sp.size])
    rank = np.arange(sp.size) - np.repeat(starts, counts)
    owners = sp[starts]
    norm2 = np.einsum("ij,ij->i", y[owners], y[owners])
    proj = y[owners] @ d
    shift = np.zeros(owners.size)
    slot = np.repeat(np.arange(owners.size), counts)
    amp_sorted = amps[order]
    for r in range(int(counts.max())):
        sel = rank == r
        who = slot[sel]
        c = eps * amp_sorted[sel] * cap * np.tanh((1.0 + np.sqrt(norm2[who])) / cap)
        norm2[who] = np.maximum(norm2[who] + 2.0 * c * proj[who] + c * c, 0.0)
        proj[who] += c
        shift[who] += c
    y[owners] += shift[:, None] * d
