"""The deterministic controlled (skeleton) equation and its diagnostics.

    dỸ = [A(t, Ỹ) + B(t, Ỹ) f(t) + ∫ γ(t, Ỹ, z) (g(t, z) - 1) ν(dz)] dt,   Ỹ(0) = x.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._costs import ell
from ._stepping import integrate, validate_grid
from .errors import DimensionError, DomainError, ParameterError
from .io import read_csv, write_csv
from .noise import JumpMeasureSpec, as_generator
from .spaces import Basis, GalerkinState, h_norm, v_norm


@dataclass(frozen=True, eq=False)
class ControlPair:
    """Piecewise-constant controls ``p = (f, g)`` on a time grid.

    ``f`` has shape ``(K, n_modes)``; ``g`` has shape ``(K, n_cells)`` or is ``None``
    (meaning ``g ≡ 1``).  ``budget`` is the level Υ when the pair is meant to lie in
    the sublevel set of the cost.
    """

    times: np.ndarray
    f: np.ndarray
    g: np.ndarray | None = None
    nu: JumpMeasureSpec | None = None
    budget: float | None = None

    def __post_init__(self):
        times = validate_grid(self.times)
        f = np.array(self.f, dtype=float)
        if f.ndim != 2 or f.shape[0] != times.size - 1:
            raise DimensionError(f"f must have shape (K, n); got {f.shape} for K={times.size - 1}")
        if not np.all(np.isfinite(f)):
            raise ParameterError("f must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "f", f)
        if self.g is not None:
            g = np.array(self.g, dtype=float)
            if self.nu is None:
                raise ParameterError("a jump control g needs its mark measure nu")
            if g.shape != (times.size - 1, self.nu.n_cells):
                raise DimensionError(f"g must have shape (K, n_cells); got {g.shape}")
            if np.any(g < 0) or not np.all(np.isfinite(g)):
                raise DomainError("g must be finite and nonnegative")
            object.__setattr__(self, "g", g)
        if self.budget is not None and not self.budget >= 0:
            raise ParameterError("budget must be nonnegative")

    @classmethod
    def null(cls, times, n_modes: int, nu: JumpMeasureSpec | None = None) -> "ControlPair":
        """``f = 0``, ``g ≡ 1``."""
        times = validate_grid(times)
        return cls(times, np.zeros((times.size - 1, n_modes)), None, nu)

    @classmethod
    def constant(cls, times, f_value, g_value=None, nu=None) -> "ControlPair":
        times = validate_grid(times)
        K = times.size - 1
        f = np.tile(np.asarray(f_value, dtype=float), (K, 1))
        g = None if g_value is None else np.tile(np.broadcast_to(np.asarray(g_value, float), (nu.n_cells,)), (K, 1))
        return cls(times, f, g, nu)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def n_modes(self) -> int:
        return self.f.shape[1]

    def g_table(self, n_cells: int | None = None) -> np.ndarray:
        if self.g is not None:
            return self.g
        cells = n_cells if n_cells is not None else (self.nu.n_cells if self.nu is not None else 1)
        return np.ones((self.times.size - 1, cells))

    def gaussian_cost(self) -> float:
        """``½ ∫ ‖f‖²_H dt``."""
        return float(0.5 * np.sum(self.f**2, axis=1) @ self.dt)

    def jump_cost(self, nu: JumpMeasureSpec | None = None) -> float:
        """``∫ ℓ(g) dν dt``, exact for piecewise-constant ``g``."""
        if self.g is None:
            return 0.0
        nu = nu or self.nu
        return float(self.dt @ (ell(self.g) @ nu.cell_masses))

    def cost(self) -> float:
        return self.gaussian_cost() + self.jump_cost()

    def in_budget(self, budget: float | None = None, tol: float = 1e-12) -> bool:
        level = self.budget if budget is None else budget
        if level is None:
            return True
        return self.gaussian_cost() <= level + tol and self.jump_cost() <= level + tol

    def scaled(self, f_factor: float = 1.0) -> "ControlPair":
        return ControlPair(self.times, self.f * f_factor, self.g, self.nu, self.budget)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Grid path of Galerkin states; ``states`` has shape ``(K + 1, n_modes)``."""

    times: np.ndarray
    states: np.ndarray
    basis: Basis
    v_norms: np.ndarray | None = None

    def __post_init__(self):
        times = validate_grid(self.times)
        states = np.asarray(self.states, dtype=float)
        if states.shape != (times.size, self.basis.n_modes):
            raise DimensionError(f"states shape {states.shape} does not match grid x modes")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if self.v_norms is None:
            object.__setattr__(self, "v_norms", v_norm(states, self.basis))

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> GalerkinState:
        return GalerkinState(self.states[i], self.basis)

    @property
    def terminal(self) -> GalerkinState:
        return self.state(-1)

    @property
    def h_norms(self) -> np.ndarray:
        return h_norm(self.states)

    def sup_distance(self, other: "Trajectory") -> float:
        """``sup_t ‖self - other‖_H`` on a shared grid."""
        if other.states.shape != self.states.shape or not np.array_equal(other.times, self.times):
            raise DimensionError("trajectories live on different grids")
        return float(np.max(h_norm(self.states - other.states)))

    def to_csv(self, path):
        n = self.basis.n_modes
        header = ["t"] + [f"c_{k}" for k in range(1, n + 1)] + ["norm_H", "norm_V"]
        rows = np.column_stack([self.times, self.states, self.h_norms, self.v_norms])
        return write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, basis: Basis | None = None) -> "Trajectory":
        header, data = read_csv(path)
        n = len(header) - 3
        basis = basis or Basis(n_modes=n)
        return cls(data[:, 0], data[:, 1:1 + n], basis, data[:, -1])


def _aligned(control: ControlPair, grid) -> np.ndarray:
    if grid is None:
        return control.times
    grid = validate_grid(grid)
    if grid.shape != control.times.shape or not np.allclose(grid, control.times, rtol=0, atol=1e-12):
        raise ParameterError("control grid does not align with the solver grid")
    return control.times


def solve_skeleton(model, control: ControlPair, x0: GalerkinState, grid=None) -> Trajectory:
    """Exponential-Euler solution of the skeleton equation on the control's grid.

    Raises :class:`BlowUpError` carrying the failure time if the state leaves the
    finite regime.
    """
    times = _aligned(control, grid)
    if x0.basis != model.basis:
        raise DimensionError("x0 is not in the model basis")
    if control.n_modes != model.n_modes:
        raise DimensionError("control f does not match the model's mode count")
    g = control.g if model.jump.active else None
    res = integrate(model, times, x0.coeffs[None, :], f=control.f, g=g, raise_on_blowup=True)
    return Trajectory(times, res.states[0], model.basis)


@dataclass(frozen=True)
class AuditRecord:
    lhs: float
    rhs: float
    passed: bool
    tol: float = 0.05


def energy_audit(traj: Trajectory, model, control: ControlPair, tol: float = 0.05) -> AuditRecord:
    """Check ``sup ‖Ỹ‖² + 2 L_A ∫ ‖Ỹ‖_V^β ≤ 2 (‖x‖² + ∫a) exp(∫c)``.

    Here ``a = 2𝔞 + 𝔟 + j`` and ``c = 2𝔞 + 𝔟 + ‖f‖² + 3j`` with
    ``j = ∫ L_γ |g - 1| dν``; this is Gronwall applied to the energy identity under
    (H.3), (H.5) and (H.8).
    """
    times = traj.times
    dt = np.diff(times)
    mid = 0.5 * (times[1:] + times[:-1])
    a_t = np.array([model.a(s) for s in mid])
    b_t = np.array([model.b(s) for s in mid])
    f2 = np.sum(control.f**2, axis=1)
    if model.jump.active and control.g is not None:
        lg = model.jump.measure.cell_integral(model.jump.bound_fn)
        j = np.abs(control.g - 1.0) @ lg
    else:
        j = np.zeros(dt.size)
    x2 = float(traj.h_norms[0] ** 2)
    big_k = x2 + float((2 * a_t + b_t + j) @ dt)
    big_c = float((2 * a_t + b_t + f2 + 3 * j) @ dt)
    rhs = 2.0 * big_k * np.exp(big_c)
    vb = traj.v_norms**model.beta
    lhs = float(np.max(traj.h_norms**2) + 2 * model.coercivity * np.sum(0.5 * (vb[1:] + vb[:-1]) * dt))
    return AuditRecord(lhs, float(rhs), bool(lhs <= rhs * (1 + tol)), tol)


@dataclass
class ContinuityResult:
    errors: np.ndarray
    ratios: np.ndarray
    trend: float = field(default=np.nan)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.errors) <= 1e-14))


def continuity_experiment(model, controls, limit: ControlPair, x0: GalerkinState, grid=None) -> ContinuityResult:
    """Skeleton errors ``sup_t ‖Ỹ^{p_n} - Ỹ^{p}‖_H`` along a control sequence ``p_n → p``.

    ``trend`` is the least-squares slope of ``log err`` against ``log n`` (``n``
    counted from 1); ratios are ``err[i+1] / err[i]``.
    """
    ref = solve_skeleton(model, limit, x0, grid)
    errors = np.array([solve_skeleton(model, c, x0, grid).sup_distance(ref) for c in controls])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = errors[1:] / errors[:-1]
        pos = errors > 0
        trend = np.nan
        if pos.sum() >= 2:
            idx = np.arange(1, errors.size + 1)[pos]
            trend = float(np.polyfit(np.log(idx), np.log(errors[pos]), 1)[0])
    return ContinuityResult(errors, ratios, trend)


def _scale_jump_cost(u, dt, masses, target):
    """Find ``s ≥ 0`` with ``∫ ℓ(exp(s u)) dν dt = target`` by bisection."""
    def cost(s):
        return float(dt @ (ell(np.exp(s * u)) @ masses))

    hi = 1.0
    while cost(hi) < target and hi < 1e6:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cost(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def random_controls(count: int, times, n_modes: int, budget: float, rng=0,
                    nu: JumpMeasureSpec | None = None) -> list[ControlPair]:
    """Random pairs with ``L̃_T(f) ≤ Υ`` and ``L_T(g) ≤ Υ`` (smooth-in-time profiles)."""
    gen = as_generator(rng)
    times = validate_grid(times)
    dt = np.diff(times)
    mid = 0.5 * (times[1:] + times[:-1]) / times[-1]
    out = []
    for _ in range(int(count)):
        freq = gen.integers(1, 4, size=n_modes)
        phase = gen.uniform(0, 2 * np.pi, size=n_modes)
        amp = gen.standard_normal(n_modes) / np.arange(1, n_modes + 1)
        f = amp * np.sin(2 * np.pi * freq * mid[:, None] + phase)
        level = budget * gen.uniform(0.2, 1.0)
        cost = 0.5 * np.sum(f**2, axis=1) @ dt
        if cost > 0:
            f *= np.sqrt(level / cost)
        g = None
        if nu is not None:
            u = gen.standard_normal(nu.n_cells) * np.cos(np.pi * gen.integers(1, 3) * mid)[:, None]
            s = _scale_jump_cost(u, dt, nu.cell_masses, budget * gen.uniform(0.2, 1.0))
            g = np.exp(s * u)
        out.append(ControlPair(times, f, g, nu, budget))
    return out
