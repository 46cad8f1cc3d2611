"""Drift/diffusion/jump triples ``(A, B, γ)`` and a sampling checker for their hypotheses.

All model evaluations work on coefficient arrays whose last axis is the mode axis,
so a batch of states ``(P, n)`` is processed in one call.  The declared constants
(``L_A``, growth constant, ``𝔞``, ``𝔟``, ``L_B``, ``L_γ``, ``R_γ``, ``ρ``, ``η``) are
derived analytically by the factory functions below and verified numerically by
:func:`check_hypotheses`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import BlowUpError, DimensionError, DomainError, ParameterError
from .noise import JumpMeasureSpec, as_generator
from .spaces import Basis, GalerkinState, h_norm, v_norm, vstar_norm

DRIFT_KINDS = ("heat", "burgers", "p-laplacian", "allen-cahn", "linear")
DIFFUSION_KINDS = ("additive", "multiplicative")
JUMP_KINDS = ("none", "constant", "saturated")


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """``B(t, u) w = σ ⊙ m(u) ⊙ w`` with ``m ≡ 1`` (additive) or ``m(u) = clip(u)``.

    The multiplicative clip is ``cap * tanh(c / cap)`` mode by mode: bounded by
    ``cap`` and 1-Lipschitz.
    """

    kind: str
    sigma: np.ndarray
    cap: float = 1.0

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise ParameterError(f"unknown diffusion kind {self.kind!r}")
        s = np.array(self.sigma, dtype=float).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise ParameterError("sigma must be finite")
        if not self.cap > 0:
            raise ParameterError("clip cap must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    def multiplier(self, y) -> np.ndarray:
        if self.kind == "additive":
            return np.broadcast_to(self.sigma, np.shape(y))
        return self.sigma * (self.cap * np.tanh(np.asarray(y) / self.cap))

    @property
    def lipschitz_sq(self) -> float:
        """``L_B``: global Lipschitz constant of ``u ↦ B(u)`` in HS norm, squared."""
        return 0.0 if self.kind == "additive" else float(self.sigma @ self.sigma)

    @property
    def growth(self) -> float:
        """``𝔟`` with ``‖B(u)‖²_HS ≤ 𝔟 (1 + ‖u‖²)``."""
        s2 = float(self.sigma @ self.sigma)
        return s2 if self.kind == "additive" else s2 * max(1.0, self.cap**2)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sigma)


@dataclass(frozen=True, eq=False)
class JumpSpec:
    """``γ(t, u, z) = amp(z) s(u) d`` with a fixed unit direction ``d``.

    ``s ≡ 1`` for ``constant`` jumps and ``s(u) = cap * tanh((1 + ‖u‖_H) / cap)`` for
    ``saturated`` jumps.  ``amp`` is given per mark (finite marks) or as
    ``amp_scale * z`` (interval marks, or finite marks without explicit amplitudes).
    """

    kind: str = "none"
    measure: JumpMeasureSpec | None = None
    direction: np.ndarray | None = None
    amps: tuple | None = None
    amp_scale: float = 1.0
    cap: float = 2.0

    def __post_init__(self):
        if self.kind not in JUMP_KINDS:
            raise ParameterError(f"unknown jump kind {self.kind!r}")
        if self.kind == "none":
            return
        if self.measure is None or self.direction is None:
            raise ParameterError("jumps need a mark measure and a direction")
        d = np.array(self.direction, dtype=float).reshape(-1)
        nd = np.linalg.norm(d)
        if not nd > 0:
            raise ParameterError("jump direction must be nonzero")
        d = d / nd
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        if self.amps is not None:
            if self.measure.kind != "finite" or len(self.amps) != len(self.measure.marks):
                raise ParameterError("explicit amplitudes need one value per finite mark")
            object.__setattr__(self, "amps", tuple(float(a) for a in self.amps))
        if not self.cap > 0:
            raise ParameterError("jump cap must be positive")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def amp(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.amps is None:
            return self.amp_scale * z
        table = dict(zip(self.measure.marks, self.amps))
        if not np.all(self.measure.contains(z)):
            raise DomainError("mark outside the mark space")
        return np.vectorize(table.__getitem__, otypes=[float])(z)

    def scale(self, y) -> np.ndarray:
        """``s(u)`` for a batch of states."""
        if self.kind == "constant":
            return np.ones(np.shape(y)[:-1])
        return self.cap * np.tanh((1.0 + h_norm(y)) / self.cap)

    @property
    def scale_lipschitz(self) -> float:
        return 0.0 if self.kind == "constant" else 1.0

    @property
    def scale_bound(self) -> float:
        return 1.0 if self.kind == "constant" else self.cap

    def bound_fn(self, z) -> np.ndarray:
        """``L_γ(z)``."""
        return np.abs(self.amp(z)) * self.scale_bound

    def lipschitz_fn(self, z) -> np.ndarray:
        """``R_γ(z)``."""
        return np.abs(self.amp(z)) * self.scale_lipschitz

    @property
    def first_moments(self) -> np.ndarray:
        """``∫_cell amp dν`` per cell."""
        if not self.active:
            return np.zeros(1)
        return self.measure.cell_integral(self.amp)

    @property
    def second_moments(self) -> np.ndarray:
        if not self.active:
            return np.zeros(1)
        return self.measure.cell_integral(lambda z: self.amp(z) ** 2)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A complete model ``(A, B, γ)`` with its hypothesis constants.

    Use the factories :func:`heat_model`, :func:`burgers_model`,
    :func:`p_laplacian_model`, :func:`allen_cahn_model` and :func:`linear_model`,
    which derive every constant from the parameters.
    """

    name: str
    basis: Basis
    drift_kind: str
    nu_visc: float = 0.0
    p: float = 2.0
    rates: np.ndarray | None = None
    diffusion: DiffusionSpec | None = None
    jump: JumpSpec = field(default_factory=JumpSpec)
    beta: float = 2.0
    alpha: float = 0.0
    zeta: float = 0.0
    eta0: float = 1.0
    big_m: float = 4.0
    a_const: float = 0.0
    b_const: float = 0.0
    a_profile: Callable | None = None
    b_profile: Callable | None = None
    coercivity: float = 1.0
    growth_c: float = 1.0
    lipschitz_b: float = 0.0
    rho: Callable | None = None
    eta: Callable | None = None
    rho_eta_c: float = 0.0

    def __post_init__(self):
        if self.drift_kind not in DRIFT_KINDS:
            raise ParameterError(f"unknown drift kind {self.drift_kind!r}")
        if self.diffusion is None:
            object.__setattr__(self, "diffusion", DiffusionSpec("additive", np.zeros(self.basis.n_modes)))
        if self.diffusion.sigma.shape[0] != self.basis.n_modes:
            raise DimensionError("sigma must have one entry per mode")
        if self.jump.active and self.jump.direction.shape[0] != self.basis.n_modes:
            raise DimensionError("jump direction must have one entry per mode")
        if not self.coercivity > 0:
            raise ParameterError("L_A must be positive")
        if not self.beta > 1:
            raise ParameterError("beta must exceed 1")
        if self.rates is not None:
            r = np.array(self.rates, dtype=float).reshape(-1)
            if r.shape[0] != self.basis.n_modes or np.any(r < 0):
                raise ParameterError("linear rates must be nonnegative, one per mode")
            r.setflags(write=False)
            object.__setattr__(self, "rates", r)

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def a(self, t) -> float:
        return float(self.a_profile(t)) if self.a_profile is not None else self.a_const

    def b(self, t) -> float:
        return float(self.b_profile(t)) if self.b_profile is not None else self.b_const

    def rho_fn(self, y) -> np.ndarray:
        return self.rho(y) if self.rho is not None else np.zeros(np.shape(y)[:-1])

    def eta_fn(self, y) -> np.ndarray:
        return self.eta(y) if self.eta is not None else np.zeros(np.shape(y)[:-1])

    # -- drift ------------------------------------------------------------
    @property
    def linear_rates(self) -> np.ndarray:
        """Diagonal rates ``L`` of the state-independent stiff part ``-L ⊙ u``."""
        if self.drift_kind == "linear":
            return self.rates
        if self.drift_kind == "p-laplacian":
            return np.zeros(self.n_modes)
        return self.nu_visc * self.basis.eigenvalues

    @property
    def is_linear(self) -> bool:
        return self.drift_kind in ("heat", "linear")

    def stiff_rates(self, y) -> np.ndarray:
        """Per-mode decay rates treated implicitly at state ``y`` (batch aware).

        For the p-Laplacian the rate freezes the largest local diffusivity
        ``(p-1) max|∂_x u|^{p-2}``, which keeps the explicit remainder damped.
        """
        if self.drift_kind != "p-laplacian":
            return self.linear_rates
        ux = self.basis.synthesize_derivative(y)
        kappa = (self.p - 1.0) * np.max(np.abs(ux), axis=-1, keepdims=True) ** (self.p - 2.0)
        return kappa * self.basis.eigenvalues

    def drift(self, t, y) -> np.ndarray:
        """Galerkin coordinates of ``P_n A(t, y)``."""
        out = self.drift_unchecked(t, y)
        if not np.all(np.isfinite(out)):
            raise BlowUpError("non-finite drift evaluation", t)
        return out

    def drift_unchecked(self, t, y) -> np.ndarray:
        """As :meth:`drift` but lets non-finite values through (batched integrator)."""
        y = np.asarray(y, dtype=float)
        basis = self.basis
        kind = self.drift_kind
        with np.errstate(over="ignore", invalid="ignore"):
            if kind == "heat":
                out = -self.nu_visc * basis.eigenvalues * y
            elif kind == "linear":
                out = -self.rates * y
            elif kind == "burgers":
                u = basis.synthesize(y)
                out = -self.nu_visc * basis.eigenvalues * y + 0.5 * basis.analyze_derivative(u * u)
            elif kind == "allen-cahn":
                u = basis.synthesize(y)
                out = -self.nu_visc * basis.eigenvalues * y + y - basis.analyze(u**3)
            else:
                ux = basis.synthesize_derivative(y)
                out = -basis.analyze_derivative(np.abs(ux) ** (self.p - 2.0) * ux)
        return out

    def explicit_drift(self, t, y, rates=None) -> np.ndarray:
        """``A(t, y) + L ⊙ y``: the part of the drift stepped explicitly."""
        rates = self.stiff_rates(y) if rates is None else rates
        return self.drift_unchecked(t, y) + rates * y

    # -- noise coefficients --------------------------------------------------
    def diffusion_apply(self, t, y, w) -> np.ndarray:
        return self.diffusion.multiplier(y) * np.asarray(w)

    def jump_drift(self, y, g=None) -> np.ndarray:
        """``∫ γ(t, y, z) (g(z) - 1) ν(dz)`` with ``g`` given per cell (batch aware)."""
        if not self.jump.active:
            return np.zeros(np.shape(y))
        m1 = self.jump.first_moments
        weight = np.zeros(np.shape(y)[:-1]) if g is None else (np.asarray(g) - 1.0) @ m1
        return (weight * self.jump.scale(y))[..., None] * self.jump.direction

    def jump_compensator(self, y, g=None) -> np.ndarray:
        """``∫ γ(t, y, z) g(z) ν(dz)``; ``g=None`` means ``g ≡ 1``."""
        if not self.jump.active:
            return np.zeros(np.shape(y))
        m1 = self.jump.first_moments
        weight = np.sum(m1) if g is None else np.asarray(g) @ m1
        return (np.asarray(weight) * self.jump.scale(y))[..., None] * self.jump.direction

    def with_noise(self, diffusion=None, jump=None) -> "ModelSpec":
        """Copy with replaced noise coefficients and recomputed ``𝔞``, ``𝔟``, ``L_B``."""
        diffusion = self.diffusion if diffusion is None else diffusion
        jump = self.jump if jump is None else jump
        return _finalize(replace(self, diffusion=diffusion, jump=jump), _drift_need(self))


def _drift_need(model: ModelSpec) -> float:
    """Smallest ``𝔞`` the drift alone needs in (H.2)/(H.3)."""
    if model.drift_kind == "allen-cahn":
        return 2.0
    if model.drift_kind == "linear" and not np.all(model.rates / model.basis.eigenvalues > 0):
        return 1.0
    return 0.0


def _finalize(model: ModelSpec, drift_need: float) -> ModelSpec:
    jump = model.jump
    lip_gamma = float(np.sum(jump.second_moments)) * jump.scale_lipschitz**2 if jump.active else 0.0
    lb = model.diffusion.lipschitz_sq
    beta, alpha, eta0 = model.beta, model.alpha, model.eta0
    big_m = max(2 * alpha * (beta - 1) * (beta + eta0) / beta,
                4 * (beta - 1) * (beta + eta0) / beta, 4.0, alpha + 2.0)
    return replace(model, lipschitz_b=lb, a_const=drift_need + lb + lip_gamma,
                   b_const=model.diffusion.growth, big_m=big_m)


def default_sigma(n_modes: int, level: float = 0.5) -> np.ndarray:
    """Square-summable amplitudes ``level / k``."""
    return level / np.arange(1, n_modes + 1)


def default_jump(basis: Basis, kind: str = "saturated") -> JumpSpec:
    nu = JumpMeasureSpec.finite([-1.0, 1.0], [0.5, 0.5])
    d = np.zeros(basis.n_modes)
    d[0] = 1.0
    return JumpSpec(kind, nu, d, amp_scale=0.5, cap=2.0)


def _make(name, basis, drift_kind, diffusion, jump, **kw) -> ModelSpec:
    if isinstance(diffusion, str) or diffusion is None:
        diffusion = DiffusionSpec(diffusion or "additive", default_sigma(basis.n_modes))
    if jump is None:
        jump = JumpSpec()
    model = ModelSpec(name, basis, drift_kind, diffusion=diffusion, jump=jump, **kw)
    return _finalize(model, _drift_need(model))


def heat_model(nu_visc=0.1, basis: Basis | None = None, diffusion=None, jump=None) -> ModelSpec:
    """``A u = ν Δu``: ``L_A = ν``, ``‖Au‖²_{V*} = ν² ‖u‖²_V``."""
    basis = basis or Basis()
    return _make("heat", basis, "heat", diffusion, jump, nu_visc=float(nu_visc),
                 coercivity=float(nu_visc), growth_c=float(nu_visc) ** 2)


def burgers_model(nu_visc=0.1, basis: Basis | None = None, diffusion=None, jump=None) -> ModelSpec:
    """``A u = ν u_xx - u u_x``.

    ``η(y)`` bounds ``sup |∂_x y|`` so that ``-∫ ∂_x y w² ≤ η(y) ‖w‖²``; the growth
    bound uses ``‖u‖²_∞ ≤ ‖u‖ ‖u_x‖`` and Poincaré with ``λ_1 ≥ π²``.
    """
    basis = basis or Basis()
    nu_visc = float(nu_visc)
    return _make("burgers", basis, "burgers", diffusion, jump, nu_visc=nu_visc,
                 coercivity=nu_visc, growth_c=2 * nu_visc**2 + 1 / (2 * np.pi), alpha=2.0,
                 eta=basis.sup_derivative_bound, rho_eta_c=float(np.sqrt(2 * basis.n_modes)))


def allen_cahn_model(nu_visc=0.1, basis: Basis | None = None, diffusion=None, jump=None) -> ModelSpec:
    """``A u = ν u_xx + u - u³``; monotone up to the ``+u`` term, so ``𝔞 ≥ 2``."""
    basis = basis or Basis()
    nu_visc = float(nu_visc)
    c = 3 * max(nu_visc**2 + np.pi**-4, np.pi**-2)
    return _make("allen-cahn", basis, "allen-cahn", diffusion, jump, nu_visc=nu_visc,
                 coercivity=nu_visc, growth_c=c, alpha=4.0)


def p_laplacian_model(p=3.0, basis: Basis | None = None, diffusion=None, jump=None) -> ModelSpec:
    """``A u = ∂_x(|∂_x u|^{p-2} ∂_x u)`` with ``β = p``.

    Discrete Jensen gives ``L_A = 1``.  The growth constant uses
    ``max|∂_x u| ≤ √(2n) ‖u‖_V`` and therefore depends on the truncation.
    """
    basis = basis or Basis(n_modes=16)
    p = float(p)
    if p < 2:
        raise ParameterError("only p >= 2 is supported")
    c = (2.0 * basis.n_modes) ** ((p - 2.0) * p / (2.0 * (p - 1.0)))
    return _make("p-laplacian", basis, "p-laplacian", diffusion, jump, p=p, beta=p,
                 coercivity=1.0, growth_c=c)


def linear_model(rates, basis: Basis | None = None, diffusion=None, jump=None) -> ModelSpec:
    """Diagonal linear drift ``A u = -rates ⊙ u`` (Ornstein-Uhlenbeck / Brownian oracles)."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    basis = basis or Basis(n_modes=rates.size)
    rates = np.broadcast_to(rates, (basis.n_modes,)).copy()
    ratio = rates / basis.eigenvalues
    if np.all(ratio > 0):
        coercivity = float(ratio.min())
    else:
        coercivity = float(1.0 / basis.eigenvalues.max())
    return _make("linear", basis, "linear", diffusion, jump, rates=rates,
                 coercivity=coercivity, growth_c=float(np.max(ratio) ** 2))


SHIPPED = {
    "heat": heat_model,
    "burgers": burgers_model,
    "allen-cahn": allen_cahn_model,
    "p-laplacian": p_laplacian_model,
}


# -- public operations on GalerkinState ----------------------------------------
def _coeffs(model: ModelSpec, u: GalerkinState) -> np.ndarray:
    if u.basis != model.basis:
        raise DimensionError("state basis differs from the model basis")
    return u.coeffs


def apply_drift(model: ModelSpec, t: float, u: GalerkinState) -> GalerkinState:
    return GalerkinState(model.drift(t, _coeffs(model, u)), model.basis)


def apply_diffusion(model: ModelSpec, t: float, u: GalerkinState, w: GalerkinState) -> GalerkinState:
    if w.basis != model.basis:
        raise DimensionError("direction basis differs from the model basis")
    return GalerkinState(model.diffusion_apply(t, _coeffs(model, u), w.coeffs), model.basis)


def hilbert_schmidt_norm(model: ModelSpec, t: float, u: GalerkinState) -> float:
    return float(h_norm(model.diffusion.multiplier(_coeffs(model, u))))


def apply_jump(model: ModelSpec, t: float, u: GalerkinState, z: float) -> GalerkinState:
    """``γ(t, u, z)``."""
    c = _coeffs(model, u)
    if not model.jump.active:
        return GalerkinState.zeros(model.basis)
    if not np.all(model.jump.measure.contains(z)):
        raise DomainError(f"mark {z!r} outside the mark space")
    vec = float(model.jump.amp(z)) * float(model.jump.scale(c)) * model.jump.direction
    return GalerkinState(vec, model.basis)


# -- hypothesis checker ------------------------------------------------------------
@dataclass
class HypothesisResult:
    checked: int = 0
    worst_margin: float = np.inf
    violations: int = 0

    def record(self, lhs, rhs, rtol=1e-9):
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        margin = rhs - lhs
        slack = rtol * (np.abs(lhs) + np.abs(rhs) + 1.0)
        self.checked += margin.size
        if margin.size:
            self.worst_margin = min(self.worst_margin, float(np.min(margin)))
        self.violations += int(np.sum(~(margin >= -slack)))


HYPOTHESES = ("H2", "H3", "H4", "H5", "H6", "H7", "H8", "H9")


@dataclass
class HypothesisReport:
    model: str
    results: dict = field(default_factory=lambda: {h: HypothesisResult() for h in HYPOTHESES})

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.results.values())

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"model": self.model,
                "hypotheses": {k: {"checked": v.checked,
                                   "worst_margin": None if not np.isfinite(v.worst_margin) else v.worst_margin,
                                   "violations": v.violations}
                               for k, v in self.results.items()}}


def sample_ball(gen, n_samples, n_modes, radius) -> np.ndarray:
    """Uniform samples in the H-ball of the given radius."""
    g = gen.standard_normal((n_samples, n_modes))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * gen.uniform(size=(n_samples, 1)) ** (1.0 / n_modes)
    return g * r


def check_hypotheses(model: ModelSpec, n_samples: int = 1000, radius: float = 5.0, rng_seed=0,
                     horizon: float = 1.0) -> HypothesisReport:
    """Sample the inequalities (H.2)-(H.9) on random pairs in the H-ball.

    Each inequality is evaluated as ``RHS - LHS``; a negative margin beyond roundoff
    counts as a violation.  Declared constants are taken from the model; nothing is
    fitted.
    """
    report = HypothesisReport(model.name)
    res = report.results
    if n_samples <= 0:
        return report
    gen = as_generator(rng_seed)
    basis = model.basis
    n = basis.n_modes
    x = sample_ball(gen, n_samples, n, radius)
    y = sample_ball(gen, n_samples, n, radius)
    t = gen.uniform(0.0, horizon, size=n_samples)
    a_t = np.array([model.a(s) for s in t])
    b_t = np.array([model.b(s) for s in t])
    beta = model.beta
    ax = np.stack([model.drift(s, xi) for s, xi in zip(t, x)])
    ay = np.stack([model.drift(s, yi) for s, yi in zip(t, y)])
    w = x - y
    w2 = np.sum(w * w, axis=1)
    hx = h_norm(x)
    vx = v_norm(x, basis)

    bx = model.diffusion.multiplier(x)
    by = model.diffusion.multiplier(y)
    b_diff2 = np.sum((bx - by) ** 2, axis=1)

    jump = model.jump
    if jump.active:
        m2 = float(np.sum(jump.second_moments))
        sx, sy = jump.scale(x), jump.scale(y)
        gamma_diff2 = m2 * (sx - sy) ** 2
    else:
        gamma_diff2 = np.zeros(n_samples)

    # (H.2) local monotonicity and growth of rho + eta
    lhs = 2 * np.sum((ax - ay) * w, axis=1) + b_diff2 + gamma_diff2
    rhs = (a_t + model.rho_fn(x) + model.eta_fn(y)) * w2
    res["H2"].record(lhs, rhs)
    for z in (x, y):
        lhs = np.abs(model.rho_fn(z)) + np.abs(model.eta_fn(z))
        rhs = model.rho_eta_c * (1 + v_norm(z, basis) ** beta) * (1 + h_norm(z) ** model.zeta)
        res["H2"].record(lhs, rhs)

    # (H.3) coercivity
    res["H3"].record(np.sum(ax * x, axis=1), a_t * (1 + hx**2) - model.coercivity * vx**beta)

    # (H.4) growth
    res["H4"].record(vstar_norm(ax, basis) ** (beta / (beta - 1)),
                     (a_t + model.growth_c * vx**beta) * (1 + hx**model.alpha))

    # (H.5) Hilbert-Schmidt growth of B
    res["H5"].record(np.sum(bx * bx, axis=1), b_t * (1 + hx**2))

    # (H.7) Lipschitz B
    res["H7"].record(b_diff2, model.lipschitz_b * w2)

    if jump.active:
        nu = jump.measure
        if nu.kind == "finite":
            z = np.asarray(nu.marks)
        else:
            z, _ = nu.sample_marks(gen, min(n_samples, 256))
        amp = jump.amp(z)
        lg = jump.bound_fn(z)
        rg = jump.lipschitz_fn(z)
        sx, sy = jump.scale(x), jump.scale(y)
        # (H.6)(3) moment bounds for p = 2, 4
        for p in (2, 4):
            lp = float(np.sum(nu.cell_integral(lambda q: jump.bound_fn(q) ** p)))
            hp = 2 ** (p - 1) * lp
            mp = float(np.sum(nu.cell_integral(lambda q: np.abs(jump.amp(q)) ** p)))
            res["H6"].record(mp * sx**p, hp * (1 + hx**p))
        # (H.6)(1) square integrability of the jump coefficient
        res["H6"].record(float(np.sum(jump.second_moments)) * horizon, np.inf)
        # (H.8) linear growth per mark, L_γ bounded (hence in every H_p), M condition
        gx = np.abs(amp)[None, :] * sx[:, None]
        res["H8"].record(gx, lg[None, :] * (1 + hx[:, None]))
        res["H8"].record(np.max(lg), np.inf)
        # (H.9) Lipschitz in the state, per mark
        gd = np.abs(amp)[None, :] * np.abs(sx - sy)[:, None]
        res["H9"].record(gd, rg[None, :] * np.sqrt(w2)[:, None])
    big_m_need = max(2 * model.alpha * (beta - 1) * (beta + model.eta0) / beta,
                     4 * (beta - 1) * (beta + model.eta0) / beta, 4.0, model.alpha + 2.0)
    res["H8"].record(big_m_need, model.big_m)
    return report


# -- configuration ---------------------------------------------------------------
def model_from_config(sections: dict) -> ModelSpec:
    """Build a model from parsed ``[model]``, ``[diffusion]`` and ``[jump]`` sections.

    Keys
    ----
    ``[model]``: ``kind`` (heat | burgers | p-laplacian | allen-cahn | linear),
    ``nu`` (viscosity, default 0.1), ``p`` (p-Laplacian exponent, default 3),
    ``rates`` (linear drift rates), ``basis`` (dirichlet | periodic), ``modes``.

    ``[diffusion]``: ``kind`` (additive | multiplicative), ``sigma`` (scalar level for
    ``level/k``, or an explicit list), ``sigma_profile`` (``decay`` default or
    ``flat``), ``cap``.

    ``[jump]``: ``kind`` (none | constant | saturated), ``marks`` and ``rates`` for a
    finite mark set, or ``low``, ``high``, ``rate``, ``cells`` for uniform interval
    marks; ``amps`` (per finite mark) or ``amp_scale``; ``direction`` (mode index,
    1-based) and ``cap``.
    """
    m = sections["model"]
    kind = m.get("kind", "heat")
    n_modes = int(m.get("modes", 16 if kind == "p-laplacian" else 64))
    basis = Basis(m.get("basis", "dirichlet"), n_modes)

    d = sections.get("diffusion", {})
    sigma = d.get("sigma", 0.5)
    if np.ndim(sigma) == 0:
        if d.get("sigma_profile", "decay") == "flat":
            sigma = np.full(n_modes, float(sigma))
        else:
            sigma = default_sigma(n_modes, float(sigma))
    diffusion = DiffusionSpec(d.get("kind", "additive"), sigma, float(d.get("cap", 1.0)))

    j = sections.get("jump", {})
    jkind = j.get("kind", "none")
    jump = None
    if jkind != "none":
        if "marks" in j:
            measure = JumpMeasureSpec.finite(j["marks"], j["rates"])
        else:
            measure = JumpMeasureSpec.interval(j.get("low", 0.0), j.get("high", 1.0),
                                               rate=j.get("rate", 1.0), n_cells=int(j.get("cells", 8)))
        direction = np.zeros(n_modes)
        direction[int(j.get("direction", 1)) - 1] = 1.0
        amps = j.get("amps")
        jump = JumpSpec(jkind, measure, direction, amps=tuple(amps) if amps is not None else None,
                        amp_scale=float(j.get("amp_scale", 1.0)), cap=float(j.get("cap", 2.0)))

    if kind == "linear":
        return linear_model(m.get("rates", 0.0), basis, diffusion, jump)
    if kind == "p-laplacian":
        return p_laplacian_model(m.get("p", 3.0), basis, diffusion, jump)
    if kind not in SHIPPED:
        raise ParameterError(f"unknown model kind {kind!r}")
    return SHIPPED[kind](m.get("nu", 0.1), basis, diffusion, jump)
