"""Spectral realization of the triple V ⊂ H ⊂ V* on the unit interval.

A field is stored as its coordinates in a fixed L²-orthonormal eigenbasis of the
Laplacian.  In these coordinates

* ``H`` is plain ℓ²,
* ``V`` carries the weight ``λ_k`` (the L² norm of the gradient),
* ``V*`` carries the weight ``1/λ_k``,

and the duality pairing between ``V*`` and ``V`` reduces to the ℓ² dot product.
Nonlinear terms are evaluated on a midpoint quadrature grid with ``4 * n_modes``
nodes, which integrates every trigonometric product of degree below ``8 * n_modes``
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import DimensionError, InvalidStateError, ParameterError

BASIS_KINDS = ("dirichlet", "periodic")
NormKind = Literal["H", "V", "Vstar"]


@dataclass(frozen=True)
class Basis:
    """Orthonormal Laplacian eigenbasis on (0, 1).

    Parameters
    ----------
    kind : {"dirichlet", "periodic"}
        ``dirichlet`` uses ``√2 sin(kπx)`` with ``λ_k = (kπ)²``.  ``periodic`` uses the
        mean-zero Fourier modes ``√2 cos(2πkx), √2 sin(2πkx)`` (interleaved) with
        ``λ = (2πk)²``; the constant mode is excluded so that every eigenvalue is positive.
    n_modes : int
        Dimension of the Galerkin subspace.
    quad_factor : int
        Quadrature nodes per mode.
    """

    kind: str = "dirichlet"
    n_modes: int = 64
    quad_factor: int = 4

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ParameterError(f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}")
        if int(self.n_modes) < 1:
            raise ParameterError("n_modes must be a positive integer")
        if int(self.quad_factor) < 2:
            raise ParameterError("quad_factor must be at least 2")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        j = np.arange(self.n_modes)
        if self.kind == "dirichlet":
            return (j + 1) * np.pi
        return 2.0 * np.pi * (j // 2 + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return self.wavenumbers**2

    @property
    def n_quad(self) -> int:
        return self.quad_factor * self.n_modes

    @cached_property
    def nodes(self) -> np.ndarray:
        m = self.n_quad
        return (np.arange(m) + 0.5) / m

    def evaluate(self, x) -> np.ndarray:
        """Basis functions at points ``x``; shape ``(len(x), n_modes)``."""
        x = np.asarray(x, dtype=float)[:, None]
        k = self.wavenumbers[None, :]
        if self.kind == "dirichlet":
            return np.sqrt(2.0) * np.sin(k * x)
        is_cos = (np.arange(self.n_modes) % 2 == 0)[None, :]
        return np.sqrt(2.0) * np.where(is_cos, np.cos(k * x), np.sin(k * x))

    def evaluate_derivative(self, x) -> np.ndarray:
        """Spatial derivatives of the basis functions at ``x``."""
        x = np.asarray(x, dtype=float)[:, None]
        k = self.wavenumbers[None, :]
        if self.kind == "dirichlet":
            return np.sqrt(2.0) * k * np.cos(k * x)
        is_cos = (np.arange(self.n_modes) % 2 == 0)[None, :]
        return np.sqrt(2.0) * k * np.where(is_cos, -np.sin(k * x), np.cos(k * x))

    @cached_property
    def _phi(self) -> np.ndarray:
        return self.evaluate(self.nodes)

    @cached_property
    def _dphi(self) -> np.ndarray:
        return self.evaluate_derivative(self.nodes)

    def synthesize(self, coeffs) -> np.ndarray:
        """Field values on the quadrature nodes; leading axes of ``coeffs`` are batch axes."""
        return np.asarray(coeffs) @ self._phi.T

    def synthesize_derivative(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self._dphi.T

    def analyze(self, values) -> np.ndarray:
        """Coordinates ``(v, e_k)`` of nodal values by midpoint quadrature."""
        return np.asarray(values) @ self._phi / self.n_quad

    def analyze_derivative(self, values) -> np.ndarray:
        """Quadrature of ``(v, e_k')``; used for weak-form divergence terms."""
        return np.asarray(values) @ self._dphi / self.n_quad

    def sup_derivative_bound(self, coeffs) -> np.ndarray:
        """Upper bound ``√2 Σ √λ_k |c_k|`` on ``sup_x |∂_x u|``."""
        return np.sqrt(2.0) * np.abs(np.asarray(coeffs)) @ self.wavenumbers


@dataclass(frozen=True)
class GalerkinState:
    """An element of the Galerkin subspace ``H_n``."""

    coeffs: np.ndarray
    basis: Basis = field(default_factory=Basis)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != self.basis.n_modes:
            raise DimensionError(f"expected {self.basis.n_modes} coefficients, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise InvalidStateError("state has non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: Basis) -> "GalerkinState":
        return cls(np.zeros(basis.n_modes), basis)

    @classmethod
    def unit(cls, basis: Basis, k: int = 1, amplitude: float = 1.0) -> "GalerkinState":
        """``amplitude * e_k`` with ``k`` counted from 1."""
        c = np.zeros(basis.n_modes)
        c[k - 1] = amplitude
        return cls(c, basis)

    def __add__(self, other: "GalerkinState") -> "GalerkinState":
        _check_same_basis(self, other)
        return GalerkinState(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other: "GalerkinState") -> "GalerkinState":
        _check_same_basis(self, other)
        return GalerkinState(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar: float) -> "GalerkinState":
        return GalerkinState(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def values(self, x=None) -> np.ndarray:
        """Reconstructed field at ``x`` (default: the quadrature nodes)."""
        if x is None:
            return self.basis.synthesize(self.coeffs)
        return self.basis.evaluate(x) @ self.coeffs


def _check_same_basis(a: GalerkinState, b: GalerkinState):
    if a.basis != b.basis:
        raise DimensionError(f"basis mismatch: {a.basis} vs {b.basis}")


def h_norm(coeffs) -> np.ndarray:
    return np.sqrt(np.sum(np.square(coeffs), axis=-1))


def v_norm(coeffs, basis: Basis) -> np.ndarray:
    return np.sqrt(np.square(coeffs) @ basis.eigenvalues)


def vstar_norm(coeffs, basis: Basis) -> np.ndarray:
    return np.sqrt(np.square(coeffs) @ (1.0 / basis.eigenvalues))


def norm(state: GalerkinState, which: NormKind = "H") -> float:
    """H, V or V* norm of a Galerkin state."""
    c = state.coeffs
    if not np.all(np.isfinite(c)):
        raise InvalidStateError("state has non-finite coefficients")
    if which == "H":
        return float(h_norm(c))
    if which == "V":
        return float(v_norm(c, state.basis))
    if which == "Vstar":
        return float(vstar_norm(c, state.basis))
    raise ParameterError(f"unknown norm {which!r}; expected 'H', 'V' or 'Vstar'")


def dual_pair(functional: GalerkinState, state: GalerkinState) -> float:
    """Duality pairing ``<functional, state>``, the ℓ² dot product of coordinates."""
    _check_same_basis(functional, state)
    return float(functional.coeffs @ state.coeffs)


def project(state: GalerkinState, m: int) -> GalerkinState:
    """Orthogonal projection onto the span of the first ``m`` modes."""
    if m < 0 or m > state.basis.n_modes:
        raise DimensionError(f"cannot project onto {m} modes of a {state.basis.n_modes}-mode basis")
    c = np.array(state.coeffs)
    c[m:] = 0.0
    return GalerkinState(c, state.basis)
