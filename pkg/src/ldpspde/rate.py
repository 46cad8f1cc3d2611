"""Control costs and the rate function ``I(φ) = inf { L̄_T(p) : Ỹ^p = φ }``.

:func:`minimize_rate` is a penalized minimum-action method: it minimizes
``L̄_T(p) + μ r(p)²`` over piecewise-constant controls, where ``r`` measures how far
the skeleton endpoint (or path) is from the target, and raises ``μ`` tenfold per
outer round.  The jump control is parameterized as ``g = exp(u)``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._costs import ell
from ._stepping import _phi1, integrate, validate_grid
from .errors import DimensionError, ParameterError
from .io import read_json, write_json
from .noise import JumpMeasureSpec, as_generator
from .skeleton import ControlPair, Trajectory, solve_skeleton
from .spaces import GalerkinState, h_norm

__all__ = [
    "ell", "control_cost", "TargetSpec", "RateOptions", "RateEstimate", "minimize_rate",
    "penalized_objective", "adjoint_gradient", "gaussian_rate_oracle",
]

TARGET_KINDS = ("point", "halfspace", "path", "ball", "whole")


def control_cost(control: ControlPair, nu: JumpMeasureSpec | None = None, grid=None) -> float:
    """``L̄_T(p) = ½ Σ ‖f_k‖² Δt_k + Σ ℓ(g_{k,i}) ν_i Δt_k``."""
    if grid is not None:
        grid = validate_grid(grid)
        if grid.shape != control.times.shape or not np.allclose(grid, control.times, rtol=0, atol=1e-12):
            raise ParameterError("control grid does not align with the given grid")
    return control.gaussian_cost() + control.jump_cost(nu)


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """The set defining ``S_φ``.

    ``point``: ``Ỹ(T) = value`` (within ``tol`` in H).  ``halfspace``:
    ``direction · Ỹ(T) ≥ level``.  ``path``: ``Ỹ = value`` on the whole grid, with
    ``value`` of shape ``(K + 1, n)``.  ``ball``: ``‖Ỹ(T) - value‖_H ≤ level`` (a
    negative radius gives the empty event).  ``whole``: every path.

    The same object serves as a Monte Carlo event through :meth:`contains`.
    """

    kind: str
    value: np.ndarray | None = None
    direction: np.ndarray | None = None
    level: float = 0.0
    tol: float = 1e-3

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ParameterError(f"unknown target kind {self.kind!r}")
        if not self.tol > 0:
            raise ParameterError("target tolerance must be positive")
        if self.kind in ("point", "path", "ball"):
            if self.value is None:
                raise ParameterError(f"a {self.kind} target needs a value")
            object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        if self.kind == "halfspace":
            if self.direction is None:
                raise ParameterError("a halfspace target needs a direction")
            object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))

    @classmethod
    def point(cls, value, tol=1e-3) -> "TargetSpec":
        return cls("point", value=value, tol=tol)

    @classmethod
    def halfspace(cls, direction, level, tol=1e-3) -> "TargetSpec":
        return cls("halfspace", direction=direction, level=float(level), tol=tol)

    @classmethod
    def path(cls, states, tol=1e-3) -> "TargetSpec":
        return cls("path", value=states, tol=tol)

    @classmethod
    def ball(cls, center, radius) -> "TargetSpec":
        return cls("ball", value=center, level=float(radius))

    @classmethod
    def whole(cls) -> "TargetSpec":
        return cls("whole")

    def contains(self, states) -> np.ndarray:
        """Event indicator for paths ``states`` of shape ``(P, K + 1, n)``; NaN rows never hit."""
        states = np.asarray(states, dtype=float)
        end = states[:, -1]
        with np.errstate(invalid="ignore"):
            if self.kind == "whole":
                return np.ones(states.shape[0], dtype=bool)
            if self.kind == "point":
                return h_norm(end - self.value) <= self.tol
            if self.kind == "ball":
                return h_norm(end - self.value) <= self.level
            if self.kind == "halfspace":
                return end @ self.direction >= self.level
            return np.max(h_norm(states - self.value), axis=1) <= self.tol

    def penalty(self, states, times):
        """Smooth squared residual and its gradient with respect to ``states``.

        ``states`` has shape ``(..., K + 1, n)``; returns ``(r², ∂r²/∂states)``.
        """
        states = np.asarray(states, dtype=float)
        grad = np.zeros_like(states)
        if self.kind == "point":
            diff = states[..., -1, :] - self.value
            grad[..., -1, :] = 2 * diff
            return np.sum(diff**2, axis=-1), grad
        if self.kind == "halfspace":
            gap = np.maximum(self.level - states[..., -1, :] @ self.direction, 0.0)
            grad[..., -1, :] = -2 * gap[..., None] * self.direction
            return gap**2, grad
        if self.kind == "whole":
            return np.zeros(states.shape[:-2]), grad
        if self.kind == "ball":
            diff = states[..., -1, :] - self.value
            dist = h_norm(diff)
            gap = np.maximum(dist - self.level, 0.0)
            unit = diff / np.where(dist > 0, dist, 1.0)[..., None]
            grad[..., -1, :] = 2 * gap[..., None] * unit
            return gap**2, grad
        w = np.r_[0.0, np.diff(times)] / (times[-1] - times[0])
        diff = states - self.value
        grad = 2 * diff * w[:, None]
        return np.sum(diff**2, axis=-1) @ w, grad

    def residual(self, states) -> float:
        """Reported constraint violation: H-distance at ``T`` or the sup over the path."""
        states = np.asarray(states, dtype=float)
        if self.kind == "point":
            return float(h_norm(states[-1] - self.value))
        if self.kind == "halfspace":
            return float(max(self.level - states[-1] @ self.direction, 0.0))
        if self.kind == "whole":
            return 0.0
        if self.kind == "ball":
            return float(max(h_norm(states[-1] - self.value) - self.level, 0.0))
        return float(np.max(h_norm(states - self.value)))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "tol": self.tol, "level": self.level}
        if self.value is not None:
            out["value"] = self.value.tolist()
        if self.direction is not None:
            out["direction"] = self.direction.tolist()
        return out


@dataclass(frozen=True)
class RateOptions:
    """Penalty schedule and inner-optimizer settings."""

    mu0: float = 10.0
    mu_factor: float = 10.0
    rounds: int = 5
    max_iter: int = 200
    restarts: int = 3
    fd: str = "forward"
    fd_scale: float = 1e-5
    gradient: str = "auto"
    optimize_jumps: bool = True
    seed: int = 0
    threads: int = 1
    init_scale: float = 0.5

    def __post_init__(self):
        if self.fd not in ("forward", "central"):
            raise ParameterError("fd must be 'forward' or 'central'")
        if self.gradient not in ("auto", "fd", "adjoint"):
            raise ParameterError("gradient must be 'auto', 'fd' or 'adjoint'")
        if not (self.mu0 > 0 and self.mu_factor >= 1 and self.rounds >= 1 and self.restarts >= 1):
            raise ParameterError("invalid penalty schedule")


@dataclass
class RateEstimate:
    """Result of :func:`minimize_rate`.

    ``value`` is ``L̄_T`` at the minimizer, or ``inf`` when the constraint looks
    infeasible (``likely_infinite``).
    """

    value: float
    minimizer: ControlPair
    residual: float
    iterations: int
    converged: bool
    likely_infinite: bool = False
    gaussian_cost: float = 0.0
    jump_cost: float = 0.0
    history: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    trajectory: Trajectory | None = None
    message: str = ""

    def to_dict(self) -> dict:
        m = self.minimizer
        return {
            "value": self.value,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "likely_infinite": self.likely_infinite,
            "message": self.message,
            "gaussian_cost": self.gaussian_cost,
            "jump_cost": self.jump_cost,
            "times": m.times.tolist(),
            "f": m.f.tolist(),
            "g": None if m.g is None else m.g.tolist(),
            "history": self.history,
            "restarts": self.restarts,
        }

    def to_json(self, path):
        return write_json(path, self.to_dict())

    @staticmethod
    def read_minimizer(path, nu: JumpMeasureSpec | None = None) -> ControlPair:
        data = read_json(path)
        return ControlPair(np.array(data["times"]), np.array(data["f"]),
                           None if data["g"] is None else np.array(data["g"]), nu)


class _Problem:
    """Flattened control vector ``θ = (f, u)`` with ``g = exp(u)``."""

    def __init__(self, model, target, x0, times, nu, opts):
        self.model, self.target, self.times, self.opts = model, target, times, opts
        self.x0 = x0.coeffs
        self.dt = np.diff(times)
        self.K, self.n = self.dt.size, model.n_modes
        self.nu = nu
        self.jumps = model.jump.active and opts.optimize_jumps and nu is not None
        self.C = nu.n_cells if self.jumps else 0
        self.masses = nu.cell_masses if self.jumps else None
        self.dim = self.K * (self.n + self.C)

    def split(self, theta):
        theta = np.atleast_2d(theta)
        P = theta.shape[0]
        f = theta[:, : self.K * self.n].reshape(P, self.K, self.n)
        u = theta[:, self.K * self.n:].reshape(P, self.K, self.C) if self.jumps else None
        return f, u

    def control(self, theta) -> ControlPair:
        f, u = self.split(theta)
        g = np.exp(u[0]) if self.jumps else None
        return ControlPair(self.times, f[0], g, self.nu if self.jumps else None)

    def costs(self, theta):
        f, u = self.split(theta)
        gauss = 0.5 * np.sum(f**2, axis=2) @ self.dt
        jump = (ell(np.exp(u)) @ self.masses) @ self.dt if self.jumps else np.zeros(f.shape[0])
        return gauss, jump

    def _solve(self, f, u):
        g = np.exp(u) if self.jumps else None
        P = f.shape[0]
        res = integrate(self.model, self.times, np.broadcast_to(self.x0, (P, self.n)), f=f, g=g)
        return res

    def evaluate(self, theta, mu):
        """Penalized objective for a batch of control vectors, shape ``(P,)``."""
        theta = np.atleast_2d(theta)
        # fixed-size chunks keep results independent of the thread count
        chunks = [theta[i:i + _CHUNK] for i in range(0, theta.shape[0], _CHUNK)]
        if self.opts.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.opts.threads) as pool:
                return np.concatenate(list(pool.map(lambda c: self._evaluate(c, mu), chunks)))
        return np.concatenate([self._evaluate(c, mu) for c in chunks])

    def _evaluate(self, theta, mu):
        f, u = self.split(theta)
        res = self._solve(f, u)
        pen, _ = self.target.penalty(res.states, self.times)
        gauss, jump = self.costs(theta)
        out = gauss + jump + mu * pen
        out[res.blown | ~np.isfinite(out)] = _BIG
        return out

    def fd_gradient(self, theta, mu):
        h = self.opts.fd_scale * (1.0 + np.linalg.norm(theta))
        eye = np.eye(self.dim) * h
        if self.opts.fd == "forward":
            vals = self.evaluate(np.vstack([theta, theta + eye]), mu)
            return vals[0], (vals[1:] - vals[0]) / h
        vals = self.evaluate(np.vstack([theta, theta + eye, theta - eye]), mu)
        d = self.dim
        return vals[0], (vals[1:d + 1] - vals[d + 1:]) / (2 * h)

    def adjoint(self, theta, mu):
        return _adjoint(self, theta, mu)


_BIG = 1e30
_CHUNK = 256


def _check_adjoint_model(model):
    if not (model.is_linear and model.diffusion.kind == "additive" and model.jump.kind in ("none", "constant")):
        raise ParameterError("the adjoint gradient needs a diagonal linear drift, additive noise "
                             "and state-independent jumps")


def _adjoint(prob: _Problem, theta, mu):
    model = prob.model
    _check_adjoint_model(model)
    f, u = prob.split(theta)
    res = prob._solve(f, u)
    states = res.states[0]
    pen, dpen = prob.target.penalty(states, prob.times)
    gauss, jump = prob.costs(theta)
    value = float(gauss[0] + jump[0] + mu * pen)
    rates = model.linear_rates
    decay = np.exp(-np.outer(prob.dt, rates))
    phi1 = _phi1(rates[None, :], prob.dt[:, None])
    lam = mu * dpen
    # adjoint sweep: lam[k] accumulates d(penalty)/d(state k) through later states
    for k in range(prob.K - 1, -1, -1):
        lam[k] += decay[k] * lam[k + 1]
    sens = phi1 * lam[1:]
    grad_f = sens * model.diffusion.sigma + f[0] * prob.dt[:, None]
    parts = [grad_f.ravel()]
    if prob.jumps:
        g = np.exp(u[0])
        m1 = model.jump.first_moments
        push = sens @ model.jump.direction
        grad_u = push[:, None] * m1[None, :] * g + np.log(g) * g * prob.masses[None, :] * prob.dt[:, None]
        parts.append(grad_u.ravel())
    return value, np.concatenate(parts)


def penalized_objective(model, target: TargetSpec, x0: GalerkinState, control: ControlPair, mu: float,
                        gradient: str = "fd", opts: RateOptions | None = None):
    """``(J, ∇J)`` of ``L̄_T + μ r²`` at ``control`` in the ``(f, u = ln g)`` coordinates."""
    opts = opts or RateOptions()
    nu = model.jump.measure if model.jump.active else None
    prob = _Problem(model, target, x0, control.times, nu, opts)
    theta = _theta_of(prob, control)
    if gradient == "adjoint":
        return prob.adjoint(theta, mu)
    val, grad = prob.fd_gradient(theta, mu)
    return float(val), grad


def adjoint_gradient(model, target: TargetSpec, x0: GalerkinState, control: ControlPair, mu: float):
    """Exact gradient of the penalized objective for diagonal linear, additive models."""
    return penalized_objective(model, target, x0, control, mu, gradient="adjoint")


def _theta_of(prob: _Problem, control: ControlPair) -> np.ndarray:
    parts = [control.f.ravel()]
    if prob.jumps:
        g = control.g_table(prob.C)
        if np.any(g <= 0):
            raise ParameterError("log-parameterized jump control needs g > 0")
        parts.append(np.log(g).ravel())
    return np.concatenate(parts)


def minimize_rate(model, target: TargetSpec, x0: GalerkinState, grid, nu: JumpMeasureSpec | None = None,
                  opts: RateOptions | None = None) -> RateEstimate:
    """Penalized quasi-Newton (BFGS) estimate of ``I`` at the target.

    Restarts from the null control and ``restarts - 1`` random controls; the best
    feasible result (smallest cost with residual below ``target.tol``) is kept.
    Each outer round is recorded in ``history`` with its objective at entry and exit.
    """
    opts = opts or RateOptions()
    times = validate_grid(grid)
    if x0.basis != model.basis:
        raise DimensionError("x0 is not in the model basis")
    if target.kind in ("point", "ball") and target.value.shape != (model.n_modes,):
        raise DimensionError("point and ball targets need one entry per mode")
    if target.kind == "halfspace" and target.direction.shape != (model.n_modes,):
        raise DimensionError("halfspace direction needs one entry per mode")
    if target.kind == "path" and target.value.shape != (times.size, model.n_modes):
        raise DimensionError("path target must have shape (K + 1, n)")
    if nu is None and model.jump.active:
        nu = model.jump.measure
    prob = _Problem(model, target, x0, times, nu, opts)
    use_adjoint = opts.gradient == "adjoint" or (
        opts.gradient == "auto" and model.is_linear and model.diffusion.kind == "additive"
        and model.jump.kind in ("none", "constant"))
    if opts.gradient == "adjoint":
        _check_adjoint_model(model)
    gen = as_generator(opts.seed)

    starts = [np.zeros(prob.dim)]
    for _ in range(opts.restarts - 1):
        starts.append(opts.init_scale * gen.standard_normal(prob.dim))

    runs = []
    for start_index, theta0 in enumerate(starts):
        runs.append(_run_schedule(prob, theta0, opts, use_adjoint, start_index))

    def rank(run):
        feasible = run["residual"] < target.tol
        return (not feasible, run["cost"] if feasible else run["final_objective"])

    best = min(runs, key=rank)
    control = prob.control(best["theta"])
    try:
        traj = solve_skeleton(model, control, x0)
    except Exception:  # blow-up at the best point is reported, not raised
        traj = None
    gauss, jump = (float(v[0]) for v in prob.costs(best["theta"]))
    converged = best["residual"] < target.tol
    likely_inf = (not converged) and _stalled(best["history"], target.tol)
    message = "converged" if converged else ("I likely ∞" if likely_inf else "penalty schedule did not converge")
    summaries = [{"start": r["start"], "cost": r["cost"], "residual": r["residual"],
                  "final_objective": r["final_objective"], "iterations": r["iterations"]} for r in runs]
    return RateEstimate(
        value=float("inf") if likely_inf else gauss + jump,
        minimizer=control,
        residual=best["residual"],
        iterations=sum(r["iterations"] for r in runs),
        converged=converged,
        likely_infinite=likely_inf,
        gaussian_cost=gauss,
        jump_cost=jump,
        history=best["history"],
        restarts=summaries,
        trajectory=traj,
        message=message,
    )


def _run_schedule(prob: _Problem, theta, opts: RateOptions, use_adjoint: bool, start_index: int) -> dict:
    mu = opts.mu0
    history = []
    iterations = 0
    for round_index in range(opts.rounds):
        def fun(th, mu=mu):
            if use_adjoint:
                return prob.adjoint(th, mu)
            return prob.fd_gradient(th, mu)

        start_val = float(prob.evaluate(theta, mu)[0])
        res = minimize(fun, theta, jac=True, method="BFGS",
                       options={"maxiter": opts.max_iter, "gtol": 1e-8 * (1 + mu)})
        # BFGS never returns a point worse than its start, but guard against a failed line search
        end_val = float(prob.evaluate(res.x, mu)[0])
        if end_val <= start_val:
            theta = res.x
        else:
            end_val = start_val
        iterations += int(res.nit)
        states = prob._solve(*prob.split(theta)).states[0]
        gauss, jump = prob.costs(theta)
        history.append({"round": round_index, "mu": mu, "objective_start": start_val,
                        "objective_end": end_val, "cost": float(gauss[0] + jump[0]),
                        "residual": prob.target.residual(states), "iterations": int(res.nit)})
        mu *= opts.mu_factor
    last = history[-1]
    return {"start": start_index, "theta": theta, "history": history, "iterations": iterations,
            "cost": last["cost"], "residual": last["residual"], "final_objective": last["objective_end"]}


def _stalled(history, tol) -> bool:
    """Residual barely moves while μ grows: the constraint set is likely empty."""
    if len(history) < 2:
        return False
    first, last = history[-2]["residual"], history[-1]["residual"]
    return last >= tol and last > 0.5 * first


def gaussian_rate_oracle(model, path: Trajectory) -> float:
    """``I(φ)`` with ``g ≡ 1`` for a diagonal linear model with additive noise.

    On each grid interval the cheapest ``L²`` control steering mode ``i`` from
    ``φ_k`` to ``φ_{k+1}`` costs ``½ (φ_{k+1} - e^{-d h} φ_k)² / W`` with
    ``W = σ² (1 - e^{-2dh}) / (2d)`` (``σ² h`` when ``d = 0``).  Summing gives the
    action of the grid path; it converges to ``½ ∫ ‖σ⁻¹(φ' - Dφ)‖² dt`` as the grid
    is refined and never exceeds the cost of any grid control that produces ``φ``.
    Returns ``inf`` when a mode without noise is forced off its free evolution.
    """
    if not (model.is_linear and model.diffusion.kind == "additive"):
        raise ParameterError("the Gaussian oracle needs a diagonal linear drift with additive noise")
    times, states = path.times, path.states
    if states.shape[1] != model.n_modes:
        raise DimensionError("path does not match the model's mode count")
    d = model.linear_rates
    sigma2 = model.diffusion.sigma**2
    h = np.diff(times)[:, None]
    decay = np.exp(-d * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(d != 0, -np.expm1(-2 * d * h) / (2 * np.where(d != 0, d, 1.0)), h) * sigma2
    resid = states[1:] - decay * states[:-1]
    scale = 1e-10 * (1.0 + np.max(np.abs(states)))
    silent = var <= 0
    if np.any(np.abs(resid[silent]) > scale):
        return float("inf")
    safe = np.where(silent, 1.0, var)
    return float(0.5 * np.sum(np.where(silent, 0.0, resid**2 / safe)))
