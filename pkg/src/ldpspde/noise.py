"""Truncated cylindrical Wiener increments and controlled Poisson random measures.

Jump intensities are controlled by a nonnegative function ``φ(t, z)`` that is
piecewise constant on the solver time grid and on a finite partition of the mark
space into *cells* (the marks themselves for a finite mark set, equal-width bins for
an interval).  A controlled measure with intensity ``θ φ ν`` is produced by thinning
a dominating homogeneous measure of intensity ``θ G ν`` with ``G ≥ sup φ``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DomainError, ParameterError
from .spaces import Basis, GalerkinState


_GAUSS16 = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with distinct ids are statistically independent (``SeedSequence``
    spawn keys); the same pair always replays the same draws.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        """Stream for path ``index`` of an ensemble seeded with ``self.seed``."""
        return RngStream(self.seed, int(index))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class JumpRecord:
    time: float
    mark: float


@dataclass(frozen=True, eq=False)
class JumpMeasureSpec:
    """Finite intensity measure ``ν`` on a compact mark space.

    Build instances with :meth:`finite` or :meth:`interval`.
    """

    kind: str
    marks: tuple = ()
    rates: tuple = ()
    low: float = 0.0
    high: float = 1.0
    density: Callable | None = None
    density_bound: float = 0.0
    n_cells: int = 1

    @classmethod
    def finite(cls, marks, rates) -> "JumpMeasureSpec":
        marks = tuple(float(m) for m in np.atleast_1d(marks))
        rates = tuple(float(r) for r in np.atleast_1d(rates))
        if len(marks) != len(rates) or not marks:
            raise ParameterError("marks and rates must be non-empty and of equal length")
        if any(r < 0 or not np.isfinite(r) for r in rates) or sum(rates) <= 0:
            raise ParameterError("rates must be finite, nonnegative, with positive total mass")
        return cls("finite", marks=marks, rates=rates, n_cells=len(marks))

    @classmethod
    def interval(cls, low, high, density=None, density_bound=None, rate=1.0, n_cells=8) -> "JumpMeasureSpec":
        """Interval marks ``[low, high]`` with a bounded density.

        Without ``density`` the measure is uniform with total mass ``rate``.
        """
        low, high = float(low), float(high)
        if not high > low:
            raise ParameterError("interval marks need high > low")
        if density is None:
            level = float(rate) / (high - low)
            if not level > 0:
                raise ParameterError("rate must be positive")
            density = _Constant(level)
            density_bound = level
        if density_bound is None or not np.isfinite(density_bound) or density_bound <= 0:
            raise ParameterError("an interval density needs a finite positive density_bound")
        spec = cls("interval", low=low, high=high, density=density,
                   density_bound=float(density_bound), n_cells=int(n_cells))
        if np.any(spec.cell_masses < 0) or spec.total_mass <= 0:
            raise ParameterError("density must be nonnegative with positive total mass")
        return spec

    # -- cell structure -------------------------------------------------
    def _cell_nodes(self):
        """Gauss-Legendre nodes/weights per cell (interval kind)."""
        x, w = _GAUSS16
        edges = np.linspace(self.low, self.high, self.n_cells + 1)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        z = mid + half * x[None, :]
        return z, half * w[None, :] * self.density(z)

    @cached_property
    def cell_masses(self) -> np.ndarray:
        masses = self.cell_integral(np.ones_like)
        masses.flags.writeable = False
        return masses

    @cached_property
    def total_mass(self) -> float:
        return float(np.sum(self.cell_masses))

    def cell_integral(self, fn) -> np.ndarray:
        """``∫_cell fn(z) ν(dz)`` for every cell; ``fn`` must be vectorized."""
        if self.kind == "finite":
            z = np.asarray(self.marks)
            return np.asarray(fn(z), dtype=float) * np.asarray(self.rates)
        z, w = self._cell_nodes()
        return np.sum(np.asarray(fn(z), dtype=float) * w, axis=1)

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "finite":
            return np.isin(z, np.asarray(self.marks))
        return (z >= self.low) & (z <= self.high)

    def cell_of(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if not np.all(self.contains(z)):
            raise DomainError("mark outside the mark space")
        if self.kind == "finite":
            lookup = {m: i for i, m in enumerate(self.marks)}
            return np.vectorize(lookup.__getitem__, otypes=[np.intp])(z)
        width = (self.high - self.low) / self.n_cells
        return np.minimum(((z - self.low) / width).astype(np.intp), self.n_cells - 1)

    def sample_marks(self, gen: np.random.Generator, size: int):
        """Draw ``size`` marks from ``ν / ν(Z)``; returns ``(marks, cells)``."""
        if self.kind == "finite":
            p = np.asarray(self.rates) / self.total_mass
            cells = gen.choice(len(self.marks), size=size, p=p)
            return np.asarray(self.marks)[cells], cells
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            z = gen.uniform(self.low, self.high, size=2 * need + 8)
            keep = z[gen.uniform(size=z.size) * self.density_bound <= self.density(z)]
            take = min(need, keep.size)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out, self.cell_of(out)


@dataclass(frozen=True)
class _Constant:
    level: float

    def __call__(self, z):
        return np.full(np.shape(z), self.level)


def sample_wiener_increments(n_modes: int, dt: float, rng, basis: Basis | None = None) -> GalerkinState:
    """One increment of the ``n_modes``-truncated cylindrical Wiener process."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    gen = as_generator(rng)
    basis = basis or Basis(n_modes=n_modes)
    return GalerkinState(np.sqrt(dt) * gen.standard_normal(n_modes), basis)


def _intensity_table(nu: JumpMeasureSpec, phi, times, horizon):
    """Normalize ``phi`` to ``(table (K, C), times (K+1,))`` or a callable."""
    if callable(phi):
        return phi, None
    arr = np.asarray(phi, dtype=float)
    if arr.ndim == 0:
        arr = np.full((1, nu.n_cells), float(arr))
        times = np.array([0.0, float(horizon)])
    else:
        if times is None:
            raise ParameterError("a tabulated intensity needs its time grid")
        times = np.asarray(times, dtype=float)
        arr = np.broadcast_to(arr, (times.size - 1, nu.n_cells)) if arr.ndim < 2 else arr
        if arr.shape != (times.size - 1, nu.n_cells):
            raise ParameterError(f"intensity table shape {arr.shape} does not match grid x cells")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("intensity must be finite and nonnegative")
    return arr, times


def sample_prm_arrays(nu: JumpMeasureSpec, phi, theta: float, horizon: float, gen, *,
                      times=None, bound=None):
    """Thinning sampler returning sorted arrays ``(times, marks, cells)``."""
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    table, grid = _intensity_table(nu, phi, times, horizon)
    if grid is None:
        if bound is None:
            raise ParameterError("a callable intensity needs an explicit bound G")
        big_g = float(bound)
    else:
        big_g = float(table.max()) if bound is None else float(bound)
    empty = (np.empty(0), np.empty(0), np.empty(0, dtype=np.intp))
    if big_g <= 0 or theta <= 0:
        return empty
    count = gen.poisson(theta * big_g * nu.total_mass * horizon)
    t = gen.uniform(0.0, horizon, size=count)
    z, cells = nu.sample_marks(gen, count)
    u = gen.uniform(size=count)
    if grid is None:
        level = np.asarray(table(t, cells), dtype=float)
        if np.any(level > big_g * (1 + 1e-12)) or np.any(level < 0):
            raise ParameterError("callable intensity violates 0 <= phi <= G")
    else:
        k = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, table.shape[0] - 1)
        level = table[k, cells]
    keep = u * big_g < level
    t, z, cells = t[keep], z[keep], cells[keep]
    order = np.argsort(t, kind="stable")
    return t[order], z[order], cells[order]


def sample_controlled_prm(nu: JumpMeasureSpec, phi, theta: float, horizon: float, rng, *,
                          times=None, bound=None) -> list[JumpRecord]:
    """Jumps of the controlled Poisson measure ``N^{θφ}`` on ``(0, horizon] x Z``.

    ``phi`` is a scalar, a ``(K, n_cells)`` table on the grid ``times`` or a callable
    ``phi(t, cell)``; a callable needs ``bound``.
    """
    t, z, _ = sample_prm_arrays(nu, phi, theta, horizon, as_generator(rng), times=times, bound=bound)
    return [JumpRecord(float(a), float(b)) for a, b in zip(t, z)]


def compensator(nu: JumpMeasureSpec, phi, theta: float, window, *, times=None) -> float:
    """``θ ∫_{t0}^{t1} ∫_Z φ dν dt``; exact for tabulated intensities."""
    t0, t1 = map(float, window)
    if t1 < t0:
        raise ParameterError("window must satisfy t0 <= t1")
    masses = nu.cell_masses
    if np.ndim(phi) == 0 and not callable(phi):
        return float(theta * float(phi) * nu.total_mass * (t1 - t0))
    if callable(phi):
        x, w = np.polynomial.legendre.leggauss(64)
        ts = 0.5 * (t1 - t0) * x + 0.5 * (t1 + t0)
        vals = np.array([np.asarray(phi(np.full(nu.n_cells, s), np.arange(nu.n_cells))) @ masses for s in ts])
        return float(theta * 0.5 * (t1 - t0) * (w @ vals))
    table, grid = _intensity_table(nu, phi, times, max(t1, 1e-300))
    lo = np.clip(grid[:-1], t0, t1)
    hi = np.clip(grid[1:], t0, t1)
    return float(theta * np.sum((hi - lo) * (table @ masses)))
