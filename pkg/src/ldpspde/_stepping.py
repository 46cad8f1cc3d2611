"""Shared exponential-Euler integrator for the skeleton and the (controlled) SPDE.

One step of size ``h`` with per-mode stiff rates ``L`` reads

    y⁺ = E ⊙ (y + √ε B(y) ΔW) + φ₁ ⊙ F(y),   E = e^{-Lh},  φ₁ = (1 - E) / L,

where ``F`` collects the explicit drift remainder, ``B(y) f`` and the jump terms.
Jumps falling in ``(t_k, t_{k+1}]`` are then applied at ``t_{k+1}`` in time order.
The scheme is exact for diagonal linear drifts under constant forcing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BlowUpError, DimensionError, ParameterError
from .spaces import h_norm

BLOWUP_THRESHOLD = 1e8


def validate_grid(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 2 or not np.all(np.isfinite(times)) or np.any(np.diff(times) <= 0):
        raise ParameterError("time grid must be finite, strictly increasing, with at least one step")
    return times


def uniform_grid(horizon: float, steps: int) -> np.ndarray:
    if not horizon > 0 or int(steps) < 1:
        raise ParameterError("uniform grid needs horizon > 0 and steps >= 1")
    return np.linspace(0.0, float(horizon), int(steps) + 1)


@dataclass
class JumpBatch:
    """Jumps of a batch of paths, sorted by (step, path, time).

    ``step[j] = k`` means jump ``j`` is applied at grid node ``k + 1``.
    """

    path: np.ndarray
    step: np.ndarray
    amp: np.ndarray

    @classmethod
    def empty(cls) -> "JumpBatch":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    def __len__(self):
        return self.path.size

    def bounds(self, n_steps: int) -> np.ndarray:
        return np.searchsorted(self.step, np.arange(n_steps + 1), side="left")


@dataclass
class StepResult:
    states: np.ndarray
    blown: np.ndarray
    blow_time: np.ndarray


def _per_path(arr, P, K, width, name):
    """Return a control array of shape ``(K, width)`` or ``(P, K, width)``."""
    if arr is None:
        return None
    arr = np.asarray(arr, dtype=float)
    if arr.shape == (K, width) or arr.shape == (P, K, width):
        return arr
    raise DimensionError(f"{name} has shape {arr.shape}; expected ({K}, {width}) or ({P}, {K}, {width})")


def _phi1(rates, h):
    rates = np.asarray(rates, dtype=float)
    safe = np.where(rates > 0, rates, 1.0)
    return np.where(rates > 0, -np.expm1(-rates * h) / safe, h)


def integrate(model, times, y0, *, f=None, g=None, eps: float = 0.0, wiener=None,
              jumps: JumpBatch | None = None, raise_on_blowup: bool = False) -> StepResult:
    """Advance a batch of states ``y0`` of shape ``(P, n)`` over ``times``.

    ``f`` and ``g`` are piecewise-constant controls shared by all paths or given per
    path.  ``wiener`` holds the increments ``ΔW`` of shape ``(P, K, n)``.  When
    ``jumps`` is given the run is stochastic and the jump compensator
    ``∫ γ g dν`` is subtracted from the drift.
    """
    times = validate_grid(times)
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    P, n = y0.shape
    K = times.size - 1
    if n != model.n_modes:
        raise DimensionError(f"initial state has {n} modes; the model has {model.n_modes}")
    dt = np.diff(times)
    f = _per_path(f, P, K, n, "f")
    jump = model.jump
    cells = jump.measure.n_cells if jump.active else 1
    g = _per_path(g, P, K, cells, "g") if jump.active else None
    if g is not None and np.any(g < 0):
        raise ParameterError("jump control g must be nonnegative")
    if wiener is not None and np.shape(wiener) != (P, K, n):
        raise DimensionError("wiener increments must have shape (P, K, n)")
    compensate = jumps is not None and jump.active
    root_eps = np.sqrt(eps)

    fast = model.is_linear and model.diffusion.kind == "additive" and jump.kind in ("none", "constant")
    if fast:
        states = _integrate_linear(model, times, dt, y0, f, g, root_eps, eps, wiener, jumps, compensate)
        return _check_blowup(states, times, raise_on_blowup)

    states = np.empty((P, K + 1, n))
    states[:, 0] = y0
    y = y0.copy()
    alive = np.ones(P, dtype=bool)
    blow_time = np.full(P, np.nan)
    bounds = jumps.bounds(K) if jumps is not None and len(jumps) else None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            t, h = times[k], dt[k]
            rates = model.stiff_rates(y)
            decay = np.exp(-rates * h)
            force = model.explicit_drift(t, y, rates)
            mult = model.diffusion.multiplier(y)
            if f is not None:
                force = force + mult * f[..., k, :]
            if jump.active:
                gk = None if g is None else g[..., k, :]
                force = force + model.jump_drift(y, gk)
                if compensate:
                    force = force - model.jump_compensator(y, gk)
            if wiener is not None:
                y = y + root_eps * mult * wiener[:, k]
            y = decay * y + _phi1(rates, h) * force
            if bounds is not None and bounds[k + 1] > bounds[k]:
                sl = slice(bounds[k], bounds[k + 1])
                _apply_jumps(model, y, jumps.path[sl], jumps.amp[sl], eps)
            bad = alive & (~np.all(np.isfinite(y), axis=1) | (h_norm(y) > BLOWUP_THRESHOLD))
            if np.any(bad):
                if raise_on_blowup:
                    raise BlowUpError("state left the finite regime", times[k + 1])
                blow_time[bad] = times[k + 1]
                alive &= ~bad
                y[~alive] = 0.0
            states[:, k + 1] = y
    states[~alive] = _mask_after(states[~alive], times, blow_time[~alive])
    return StepResult(states, ~alive, blow_time)


def _apply_jumps(model, y, paths, amps, eps):
    jump = model.jump
    if jump.kind == "constant":
        np.add.at(y, paths, (eps * amps)[:, None] * jump.direction)
    else:
        kernels.apply_saturated_jumps(y, np.ascontiguousarray(jump.direction), np.ascontiguousarray(paths, np.int64),
                                      np.ascontiguousarray(amps, float), float(eps), float(jump.cap))


def _integrate_linear(model, times, dt, y0, f, g, root_eps, eps, wiener, jumps, compensate):
    P, n = y0.shape
    K = dt.size
    rates = model.linear_rates
    decay = np.exp(-np.outer(dt, rates))
    phi1 = _phi1(rates[None, :], dt[:, None])
    sigma = model.diffusion.sigma
    force = np.zeros((K, n)) if f is None else sigma * f
    jump = model.jump
    if jump.active:
        m1 = jump.first_moments
        weight = np.zeros(K) if g is None else (g - 1.0) @ m1
        if compensate:
            weight = weight - (np.full(K, m1.sum()) if g is None else g @ m1)
        force = force + weight[..., None] * jump.direction
    inc = np.broadcast_to(phi1 * force, (P, K, n)).copy()
    if wiener is not None:
        inc += decay * (root_eps * sigma) * wiener
    if jumps is not None and len(jumps):
        np.add.at(inc, (jumps.path, jumps.step), (eps * jumps.amp)[:, None] * jump.direction)
    return kernels.linear_recurrence(np.ascontiguousarray(y0), np.ascontiguousarray(decay), inc)


def _mask_after(states, times, blow_time):
    out = states.copy()
    out[times[None, :] >= blow_time[:, None]] = np.nan
    return out


def _check_blowup(states, times, raise_on_blowup):
    P = states.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        norms = h_norm(states)
    bad = ~np.isfinite(norms) | (norms > BLOWUP_THRESHOLD)
    blown = bad.any(axis=1)
    blow_time = np.full(P, np.nan)
    if np.any(blown):
        first = np.argmax(bad, axis=1)
        if raise_on_blowup:
            raise BlowUpError("state left the finite regime", times[first[blown][0]])
        blow_time[blown] = times[first[blown]]
        states[blown] = _mask_after(states[blown], times, blow_time[blown])
    return StepResult(states, blown, blow_time)
