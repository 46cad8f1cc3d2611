"""Monte Carlo simulation of the small-noise SPDE and its controlled version.

    dY = A(t, Y) dt + √ε B(t, Y) dW + ε ∫ γ(t, Y⁻, z) Ñ^{ε⁻¹}(dz, dt)

The controlled equation adds ``B ψ dt`` and ``∫ γ (φ - 1) dν dt`` and replaces the
Poisson measure by ``N^{ε⁻¹ φ}``.  Every path draws from its own
:class:`~ldpspde.noise.RngStream` ``(seed, path_index)``: first the Wiener block,
then the Poisson measure.  Batches of paths can run on worker threads; results are
merged by path index, so the ensemble does not depend on the thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._stepping import JumpBatch, integrate, validate_grid
from .errors import DimensionError, ParameterError
from .io import write_csv, write_json
from .noise import RngStream, sample_prm_arrays
from .skeleton import ControlPair, Trajectory, solve_skeleton
from .spaces import Basis, GalerkinState, h_norm, v_norm


@dataclass(frozen=True)
class SimParams:
    """Noise level, grid and Monte Carlo settings."""

    eps: float
    times: np.ndarray
    n_paths: int = 1000
    seed: int = 0
    threads: int = 1
    batch_size: int = 500

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ParameterError("eps must be positive")
        if int(self.n_paths) < 1:
            raise ParameterError("n_paths must be at least 1")
        if int(self.threads) < 1 or int(self.batch_size) < 1:
            raise ParameterError("threads and batch_size must be positive")
        object.__setattr__(self, "times", validate_grid(self.times))


@dataclass
class PathEnsemble:
    """Simulated paths on a shared grid.

    ``states`` has shape ``(P, K + 1, n)``; rows of blown-up paths are NaN from the
    blow-up time on.  Jumps are stored compressed: path ``i`` owns entries
    ``jump_ptr[i]:jump_ptr[i + 1]`` of ``jump_times`` and ``jump_marks``.
    ``log_weights`` are the likelihood ratios of the original law with respect to the
    simulated (controlled) law; they vanish for uncontrolled runs.
    """

    eps: float
    times: np.ndarray
    basis: Basis
    beta: float
    states: np.ndarray
    blown: np.ndarray
    blow_time: np.ndarray
    jump_ptr: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    log_weights: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_blown(self) -> int:
        return int(np.sum(self.blown))

    @property
    def jump_counts(self) -> np.ndarray:
        return np.diff(self.jump_ptr)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.times, self.states[i], self.basis)

    def jump_records(self, i: int):
        from .noise import JumpRecord

        sl = slice(self.jump_ptr[i], self.jump_ptr[i + 1])
        return [JumpRecord(float(t), float(z)) for t, z in zip(self.jump_times[sl], self.jump_marks[sl])]

    def sup_sq_distance(self, reference: Trajectory) -> np.ndarray:
        """``sup_t ‖Y_i(t) - reference(t)‖²_H`` per path (NaN for blown paths)."""
        if reference.states.shape != self.states.shape[1:]:
            raise DimensionError("reference trajectory lives on a different grid")
        return np.max(np.sum((self.states - reference.states) ** 2, axis=2), axis=1)

    def summary(self) -> dict:
        counts = self.jump_counts
        out = {
            "eps": self.eps,
            "n_paths": self.n_paths,
            "n_blown": self.n_blown,
            "seed": self.seed,
            "steps": int(self.times.size - 1),
            "horizon": float(self.times[-1]),
            "n_modes": self.basis.n_modes,
            "jump_count_mean": float(np.mean(counts)),
            "jump_count_var": float(np.var(counts, ddof=1)) if counts.size > 1 else 0.0,
            "moments": {},
        }
        for p in (2, 4):
            est = moment_estimate(self, p)
            out["moments"][f"p{p}"] = est.as_dict()
        alive = ~self.blown
        out["terminal_mean"] = np.mean(self.terminal[alive], axis=0).tolist() if alive.any() else []
        out.update(self.meta)
        return out

    def to_json(self, path):
        return write_json(path, self.summary())

    def write_path_csvs(self, directory, limit: int | None = None):
        """One CSV per path (``path_00000.csv``...), same columns as trajectory exports."""
        n = self.n_paths if limit is None else min(limit, self.n_paths)
        paths = []
        for i in range(n):
            paths.append(self.trajectory(i).to_csv(f"{directory}/path_{i:05d}.csv"))
        return paths


def _draw_path(model, stream: RngStream, times, eps, g_table, bound):
    """Wiener block then controlled Poisson jumps for one path."""
    gen = stream.generator()
    dt = np.diff(times)
    wiener = np.sqrt(dt)[:, None] * gen.standard_normal((dt.size, model.n_modes))
    if not model.jump.active:
        return wiener, np.empty(0), np.empty(0), np.empty(0, np.intp)
    t0 = times[0]
    phi = 1.0 if g_table is None else g_table
    t, z, cells = sample_prm_arrays(model.jump.measure, phi, 1.0 / eps, times[-1] - t0, gen,
                                    times=None if g_table is None else times - t0, bound=bound)
    return wiener, t + t0, z, cells


def _run_batch(model, params: SimParams, x0, idx, f, g_table, want_weights):
    times = params.times
    K = times.size - 1
    eps = params.eps
    nu = model.jump.measure if model.jump.active else None
    bound = None if g_table is None else float(g_table.max())
    draws = [_draw_path(model, RngStream(params.seed, int(i)), times, eps, g_table, bound) for i in idx]
    wiener = np.stack([d[0] for d in draws])
    counts = np.array([d[1].size for d in draws], dtype=np.int64)
    jt = np.concatenate([d[1] for d in draws]) if draws else np.empty(0)
    jz = np.concatenate([d[2] for d in draws]) if draws else np.empty(0)
    jc = np.concatenate([d[3] for d in draws]).astype(np.intp) if draws else np.empty(0, np.intp)
    jp = np.repeat(np.arange(len(idx), dtype=np.int64), counts)
    jumps = None
    if nu is not None:
        step = np.clip(np.searchsorted(times, jt, side="left") - 1, 0, K - 1).astype(np.int64)
        order = np.lexsort((jt, jp, step))
        jumps = JumpBatch(jp[order], step[order], model.jump.amp(jz[order]) if jz.size else np.empty(0))
    res = integrate(model, times, np.broadcast_to(x0, (len(idx), model.n_modes)), f=f,
                    g=g_table, eps=eps, wiener=wiener, jumps=jumps)

    logw = np.zeros(len(idx))
    if want_weights:
        dt = np.diff(times)
        if f is not None:
            logw -= np.einsum("pkn,kn->p", wiener, f) / np.sqrt(eps)
            logw -= 0.5 * float(np.sum(f**2, axis=1) @ dt) / eps
        if g_table is not None and nu is not None:
            step_all = np.clip(np.searchsorted(times, jt, side="left") - 1, 0, K - 1)
            with np.errstate(divide="ignore"):
                logphi = np.log(g_table[step_all, jc]) if jt.size else np.empty(0)
            logw -= np.bincount(jp, weights=logphi, minlength=len(idx)) if jt.size else 0.0
            logw += float(dt @ ((g_table - 1.0) @ nu.cell_masses)) / eps
    return res, counts, jt, jz, logw


def _simulate(model, params: SimParams, x0, control: ControlPair | None) -> PathEnsemble:
    times = params.times
    if x0 is None:
        x0 = GalerkinState.zeros(model.basis)
    if x0.basis != model.basis:
        raise DimensionError("x0 is not in the model basis")
    f = g_table = None
    if control is not None:
        if control.times.shape != times.shape or not np.allclose(control.times, times, rtol=0, atol=1e-12):
            raise ParameterError("control grid does not align with the simulation grid")
        if control.n_modes != model.n_modes:
            raise DimensionError("control f does not match the model's mode count")
        f = control.f if np.any(control.f) else None
        if model.jump.active:
            g_table = control.g_table(model.jump.measure.n_cells)
            if np.all(g_table == 1.0):
                g_table = None
    P = int(params.n_paths)
    batches = [np.arange(s, min(s + params.batch_size, P)) for s in range(0, P, params.batch_size)]

    def job(idx):
        return _run_batch(model, params, x0.coeffs, idx, f, g_table, control is not None)

    if params.threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=int(params.threads)) as pool:
            results = list(pool.map(job, batches))
    else:
        results = [job(b) for b in batches]

    states = np.concatenate([r[0].states for r in results])
    counts = np.concatenate([r[1] for r in results])
    return PathEnsemble(
        eps=params.eps,
        times=times,
        basis=model.basis,
        beta=model.beta,
        states=states,
        blown=np.concatenate([r[0].blown for r in results]),
        blow_time=np.concatenate([r[0].blow_time for r in results]),
        jump_ptr=np.r_[0, np.cumsum(counts)].astype(np.int64),
        jump_times=np.concatenate([r[2] for r in results]),
        jump_marks=np.concatenate([r[3] for r in results]),
        log_weights=np.concatenate([r[4] for r in results]),
        seed=int(params.seed),
        meta={"model": model.name, "controlled": control is not None},
    )


def simulate_spde(model, params: SimParams, x0: GalerkinState | None = None) -> PathEnsemble:
    """Simulate the uncontrolled SPDE; blown-up paths are flagged, not fatal."""
    return _simulate(model, params, x0, None)


def simulate_controlled_spde(model, params: SimParams, control: ControlPair,
                             x0: GalerkinState | None = None) -> PathEnsemble:
    """Simulate under the control ``(ψ, φ)`` and record Girsanov log-weights.

    With ``ψ = 0`` and ``φ ≡ 1`` the paths coincide with :func:`simulate_spde` for the
    same seed, because thinning at ``φ ≡ 1`` accepts every candidate jump.
    """
    return _simulate(model, params, x0, control)


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    sup_moment: float
    sup_stderr: float
    v_moment: float
    v_stderr: float
    n_used: int
    n_excluded: int

    def as_dict(self) -> dict:
        return {"p": self.p, "sup_moment": self.sup_moment, "sup_stderr": self.sup_stderr,
                "v_moment": self.v_moment, "v_stderr": self.v_stderr,
                "n_used": self.n_used, "n_excluded": self.n_excluded}


def _mean_se(x):
    if x.size == 0:
        return np.nan, np.nan
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def moment_estimate(ens: PathEnsemble, p: float = 2.0) -> MomentEstimate:
    """``E[sup_t ‖Y‖^p_H]`` and ``E[∫ ‖Y‖^{p-2}_H ‖Y‖^β_V dt]`` with standard errors.

    Blown-up paths are excluded and counted in ``n_excluded``.
    """
    if p < 2:
        raise ParameterError("moment exponent p must be at least 2")
    alive = ~ens.blown
    states = ens.states[alive]
    hn = h_norm(states)
    vn = v_norm(states, ens.basis)
    sup = np.max(hn, axis=1) ** p
    integrand = hn ** (p - 2) * vn**ens.beta
    dt = np.diff(ens.times)
    vint = 0.5 * (integrand[:, 1:] + integrand[:, :-1]) @ dt
    sm, sse = _mean_se(sup)
    vm, vse = _mean_se(vint)
    return MomentEstimate(float(p), sm, sse, vm, vse, int(alive.sum()), int(ens.blown.sum()))


@dataclass
class Condition2Table:
    eps: np.ndarray
    mean_sq_error: np.ndarray
    stderr: np.ndarray
    n_excluded: np.ndarray
    slope: float

    def rows(self) -> list[dict]:
        return [{"eps": float(e), "mean_sq_sup_error": float(m), "stderr": float(s), "n_excluded": int(b)}
                for e, m, s, b in zip(self.eps, self.mean_sq_error, self.stderr, self.n_excluded)]

    def to_csv(self, path):
        return write_csv(path, ["eps", "mean_sq_sup_error", "stderr", "n_excluded"],
                         np.column_stack([self.eps, self.mean_sq_error, self.stderr, self.n_excluded]))


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def condition2_experiment(model, eps_list, controls, limit: ControlPair, x0: GalerkinState, grid=None,
                          n_paths: int = 1000, seed: int = 0, threads: int = 1) -> Condition2Table:
    """``E[sup_t ‖Y^ε_{q_ε} - Ỹ^{q}‖²_H]`` per ε, with the log-log slope in ε.

    ``controls`` is one :class:`ControlPair` used at every ε, a sequence aligned with
    ``eps_list`` or a callable ``eps -> ControlPair``.  All levels share the seed.
    """
    eps_list = np.asarray(eps_list, dtype=float)
    times = limit.times if grid is None else validate_grid(grid)
    ref = solve_skeleton(model, limit, x0, times)
    means, ses, excl = [], [], []
    for i, eps in enumerate(eps_list):
        if callable(controls):
            q = controls(eps)
        elif isinstance(controls, ControlPair):
            q = controls
        else:
            q = controls[i]
        params = SimParams(float(eps), times, n_paths, seed, threads)
        ens = simulate_controlled_spde(model, params, q, x0)
        err = ens.sup_sq_distance(ref)[~ens.blown]
        m, s = _mean_se(err)
        means.append(m)
        ses.append(s)
        excl.append(ens.n_blown)
    means = np.array(means)
    return Condition2Table(eps_list, means, np.array(ses), np.array(excl), loglog_slope(eps_list, means))
