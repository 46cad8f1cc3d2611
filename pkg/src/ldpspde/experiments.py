"""Rare-event Monte Carlo against the rate function.

Plain and importance-sampled estimates of ``P(Y^ε ∈ A)`` for terminal events, and
the slope study comparing ``ε ln P̂`` with ``-I``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as normal

from .errors import ParameterError
from .io import write_csv, write_json
from .rate import TargetSpec
from .skeleton import ControlPair
from .spaces import GalerkinState
from .spde import SimParams, simulate_controlled_spde, simulate_spde

LOG_WEIGHT_CAP = 700.0


@dataclass(frozen=True)
class ProbEstimate:
    """A probability estimate with a 95% interval.

    ``variance`` is the per-path variance of the estimator's summands, so the
    standard error is ``sqrt(variance / n_paths)``.
    """

    eps: float
    p: float
    ci_low: float
    ci_high: float
    hits: int
    n_paths: int
    variance: float
    n_blown: int = 0
    method: str = "plain"
    relative_variance: float = float("nan")
    reliable: bool = True
    note: str = ""

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n_paths)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("eps", "p", "ci_low", "ci_high", "hits", "n_paths", "variance",
                                               "n_blown", "method", "relative_variance", "reliable", "note")}


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ParameterError("n must be positive")
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


def _grid_of(grid, tilt):
    if grid is not None:
        return grid
    if tilt is not None:
        return tilt.times
    raise ParameterError("a time grid is required")


def estimate_event_prob(model, eps: float, event: TargetSpec, n_paths: int, seed: int = 0, *, grid=None,
                        x0: GalerkinState | None = None, threads: int = 1) -> ProbEstimate:
    """Plain Monte Carlo fraction of paths in ``event`` with a Wilson interval.

    Blown-up paths stay in the denominator and count as misses.
    """
    if n_paths < 100:
        raise ParameterError("plain Monte Carlo needs at least 100 paths")
    params = SimParams(eps, _grid_of(grid, None), n_paths, seed, threads)
    ens = simulate_spde(model, params, x0)
    hit = event.contains(ens.states) & ~ens.blown
    hits = int(hit.sum())
    p = hits / n_paths
    lo, hi = wilson_interval(hits, n_paths)
    note = "" if hits else "no hits: increase n or use tilting (ci_high is an upper bound)"
    return ProbEstimate(eps, p, lo, hi, hits, n_paths, p * (1 - p), ens.n_blown, "plain", note=note)


def tilted_estimate(model, eps: float, event: TargetSpec, tilt: ControlPair, n_paths: int, seed: int = 0, *,
                    grid=None, x0: GalerkinState | None = None, threads: int = 1) -> ProbEstimate:
    """Importance sampling under the control ``tilt``, reweighted by the likelihood ratio.

    Log-weights above ``LOG_WEIGHT_CAP`` are clamped and the estimate is marked
    unreliable.  The interval is the normal one, clipped to ``[0, 1]``.
    """
    params = SimParams(eps, _grid_of(grid, tilt), n_paths, seed, threads)
    ens = simulate_controlled_spde(model, params, tilt, x0)
    logw = ens.log_weights
    bad = ~np.isfinite(logw) | (logw > LOG_WEIGHT_CAP)
    logw = np.where(bad, LOG_WEIGHT_CAP, logw)
    hit = event.contains(ens.states) & ~ens.blown
    terms = np.where(hit, np.exp(logw), 0.0)
    p = float(np.mean(terms))
    var = float(np.var(terms, ddof=1)) if n_paths > 1 else 0.0
    se = math.sqrt(var / n_paths)
    rel = var / p**2 if p > 0 else float("nan")
    hits = int(hit.sum())
    note = "" if hits else "no hits under the tilt"
    if bad.any():
        note = (note + "; " if note else "") + f"{int(bad.sum())} log-weights clamped"
    return ProbEstimate(eps, p, max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se), hits, n_paths, var,
                        ens.n_blown, "tilted", rel, not bad.any(), note)


@dataclass
class LdpReport:
    """``ε ln P̂`` against ``-I``.

    ``slope`` is the least-squares slope of ``ln P̂`` against ``1/ε``, which tends to
    ``-I`` as ε → 0; ``relative_gap = |slope + I| / I``.  ``mean_gap`` is
    ``|mean(ε ln P̂) + I| / I`` and ``spread`` is the range of ``ε ln P̂`` relative
    to its mean magnitude.  With ``I = 0`` both gaps are absolute.
    """

    eps_list: np.ndarray
    estimates: list
    rate_value: float
    slope: float
    intercept: float
    eps_log_p: np.ndarray
    relative_gap: float
    mean_gap: float
    spread: float
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eps_list": self.eps_list.tolist(),
            "rate_value": self.rate_value,
            "slope": self.slope,
            "intercept": self.intercept,
            "eps_log_p": self.eps_log_p.tolist(),
            "relative_gap": self.relative_gap,
            "mean_gap": self.mean_gap,
            "spread": self.spread,
            "excluded": list(self.excluded),
            "estimates": [e.as_dict() for e in self.estimates],
        }

    def to_json(self, path):
        return write_json(path, self.to_dict())

    def to_csv(self, path):
        rows = []
        for e in self.estimates:
            with np.errstate(divide="ignore"):
                rows.append([e.eps, np.log(e.p), np.log(e.ci_low), np.log(e.ci_high), e.p, e.ci_low, e.ci_high])
        return write_csv(path, ["eps", "ln_p", "ln_ci_low", "ln_ci_high", "p", "ci_low", "ci_high"], rows)


def ldp_slope_study(model, event: TargetSpec, eps_list, n_paths: int, rate_value: float, seed: int = 0, *,
                    grid=None, x0: GalerkinState | None = None, tilt=None, threads: int = 1) -> LdpReport:
    """Estimate ``P(Y^ε(T) ∈ event)`` over ``eps_list`` and compare its decay with ``I``.

    ``tilt`` (a :class:`ControlPair` or a callable ``eps -> ControlPair``) switches to
    importance sampling.  Levels without hits are excluded with a warning.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    if eps_arr.size < 3:
        raise ParameterError("the slope study needs at least three noise levels")
    estimates, keep, excluded = [], [], []
    for eps in eps_arr:
        if tilt is None:
            est = estimate_event_prob(model, float(eps), event, n_paths, seed, grid=grid, x0=x0, threads=threads)
        else:
            q = tilt(eps) if callable(tilt) else tilt
            est = tilted_estimate(model, float(eps), event, q, n_paths, seed, grid=grid, x0=x0, threads=threads)
        estimates.append(est)
        if est.p > 0:
            keep.append(est)
        else:
            excluded.append(float(eps))
            warnings.warn(f"no hits at eps={eps:g}; level excluded from the fit", RuntimeWarning, stacklevel=2)
    if len(keep) < 2:
        raise ParameterError("fewer than two noise levels produced hits")
    e = np.array([k.eps for k in keep])
    logp = np.log([k.p for k in keep])
    slope, intercept = np.polyfit(1.0 / e, logp, 1)
    elp = e * logp
    scale = abs(rate_value) if rate_value > 0 else 1.0
    mag = abs(np.mean(elp))
    spread = float((elp.max() - elp.min()) / mag) if mag > 0 else 0.0
    return LdpReport(eps_arr, estimates, float(rate_value), float(slope), float(intercept), elp,
                     float(abs(slope + rate_value) / scale), float(abs(np.mean(elp) + rate_value) / scale),
                     spread, excluded)


def gaussian_tail(level: float, variance: float) -> float:
    """``P(N(0, variance) ≥ level)``."""
    return float(normal.sf(level / math.sqrt(variance)))
