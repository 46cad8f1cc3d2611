"""Command-line front end.

Usage::

    ldpspde SUBCOMMAND --config run.toml [--out DIR] [--seed N] [--threads N] [--paths N] [--eps LIST]

Subcommands: ``simulate``, ``skeleton``, ``rate``, ``check-hypotheses``,
``condition2``, ``ldp``.  Each run writes its outputs and a ``manifest.txt`` into
``--out`` (default ``runs/<subcommand>``).

Config format
-------------
INI/TOML-style sections of ``key = value`` lines, read with :mod:`configparser`.
Values are literals (numbers, quoted strings, lists, ``true``/``false``); bare words
are strings.  Files that stick to quoted strings are also valid TOML.

``[model]``
    ``kind`` (heat | burgers | p-laplacian | allen-cahn | linear, required),
    ``nu``, ``p``, ``rates``, ``basis`` (dirichlet | periodic), ``modes``.
``[diffusion]``
    ``kind`` (additive | multiplicative), ``sigma`` (level or list),
    ``sigma_profile`` (decay | flat), ``cap``.
``[jump]``
    ``kind`` (none | constant | saturated), ``marks`` + ``rates`` or
    ``low``/``high``/``rate``/``cells``; ``amps`` or ``amp_scale``; ``direction``; ``cap``.
``[grid]``
    ``T`` (horizon, default 1), ``steps`` (default 4096 for ``skeleton``, 256 otherwise).
``[initial]``
    ``coeffs`` (list) or ``mode`` + ``amplitude``; zero state by default.
``[noise]``
    ``eps`` (number or list), ``seed``, ``paths``, ``threads``, ``per_path_csv``.
``[control]``
    ``f_file`` / ``g_file`` (CSV grids with a header row, ``K`` rows), or
    ``f_value`` / ``g_value`` (constant vectors), or ``minimizer`` (a ``rate.json``).
``[target]``
    ``kind`` (point | halfspace | ball | whole), ``value``, ``direction``, ``level``, ``tol``.
``[rate]``
    ``mu0``, ``mu_factor``, ``rounds``, ``restarts``, ``max_iter``, ``fd``, ``gradient``, ``seed``.
``[ldp]``
    ``rate`` (known ``I``; otherwise computed), ``tilt`` (bool).
``[hypotheses]``
    ``samples``, ``radius``, ``seed``.
"""
from __future__ import annotations

import argparse
import ast
import configparser
import hashlib
import os
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .errors import ConfigError, LdpError
from .io import file_digest, read_csv, write_json
from .models import check_hypotheses, model_from_config
from .rate import RateEstimate, RateOptions, TargetSpec, gaussian_rate_oracle, minimize_rate
from .skeleton import ControlPair, energy_audit, solve_skeleton
from .spaces import GalerkinState
from ._stepping import uniform_grid

HELP = {
    "simulate": "Monte Carlo paths of the controlled SPDE",
    "skeleton": "solve the skeleton equation and audit its energy bound",
    "rate": "estimate the rate function at a target",
    "check-hypotheses": "sample the structural inequalities of a model",
    "condition2": "mean-square distance to the skeleton as eps shrinks",
    "ldp": "rare-event probabilities against the rate",
}
COMMANDS = ("simulate", "skeleton", "rate", "check-hypotheses", "condition2", "ldp")
KNOWN = {
    "model": {"kind", "nu", "p", "rates", "basis", "modes"},
    "diffusion": {"kind", "sigma", "sigma_profile", "cap"},
    "jump": {"kind", "marks", "rates", "low", "high", "rate", "cells", "amps", "amp_scale", "direction", "cap"},
    "grid": {"t", "steps"},
    "initial": {"coeffs", "mode", "amplitude"},
    "noise": {"eps", "seed", "paths", "threads", "per_path_csv"},
    "control": {"f_file", "g_file", "f_value", "g_value", "minimizer"},
    "target": {"kind", "value", "direction", "level", "tol"},
    "rate": {"mu0", "mu_factor", "rounds", "restarts", "max_iter", "fd", "gradient", "seed"},
    "ldp": {"rate", "tilt"},
    "hypotheses": {"samples", "radius", "seed"},
}


def _literal(text: str):
    raw = text.strip()
    lowered = {"true": "True", "false": "False"}.get(raw.lower(), raw)
    try:
        return ast.literal_eval(lowered)
    except (ValueError, SyntaxError):
        return raw.strip("'\"")


@dataclass
class RunConfig:
    """Validated run configuration; ``sections`` holds the parsed values."""

    path: Path
    sections: dict
    model: object = None
    times: np.ndarray | None = None
    x0: GalerkinState | None = None
    eps: list = field(default_factory=list)
    seed: int = 0
    paths: int = 1000
    threads: int = 1
    referenced: list = field(default_factory=list)

    def section(self, name) -> dict:
        return self.sections.get(name, {})


def _read_sections(path: Path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str.lower
    with path.open() as fh:
        parser.read_file(fh)
    return {name: {k: _literal(v) for k, v in parser.items(name)} for name in parser.sections()}


def _as_list(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(",", " ").split()]
    return [float(v) for v in np.atleast_1d(value)]


def parse_config(path, command: str = "simulate", overrides: dict | None = None) -> RunConfig:
    """Read and validate a run configuration; every problem is reported at once.

    ``overrides`` carries command-line values (``seed``, ``threads``, ``paths``, ``eps``).
    """
    path = Path(path)
    errors = []
    try:
        sections = _read_sections(path)
    except (OSError, configparser.Error) as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cfg = RunConfig(path, sections)

    for name, keys in sections.items():
        if name not in KNOWN:
            errors.append(f"{name}: unknown section")
            continue
        for key in keys:
            if key not in KNOWN[name]:
                errors.append(f"{name}.{key}: unknown key")
    if "model" not in sections:
        errors.append("model: missing section")
    elif "kind" not in sections["model"]:
        errors.append("model.kind: missing key")

    def number(sec, key, default, kind=float, low=None, strict=False):
        raw = overrides.get(key) if sec == "noise" and key in overrides else sections.get(sec, {}).get(key, default)
        try:
            val = kind(raw)
        except (TypeError, ValueError):
            errors.append(f"{sec}.{key}: expected {kind.__name__}, got {raw!r}")
            return default
        if low is not None and (val <= low if strict else val < low):
            errors.append(f"{sec}.{key}: must be {'>' if strict else '>='} {low}, got {val!r}")
        return val

    horizon = number("grid", "t", 1.0, float, 0.0, strict=True)
    steps = number("grid", "steps", 4096 if command == "skeleton" else 256, int, 1)
    cfg.seed = number("noise", "seed", 0, int, 0)
    cfg.paths = number("noise", "paths", 1000, int, 1)
    cfg.threads = number("noise", "threads", os.cpu_count() or 1, int, 1)
    raw_eps = overrides.get("eps", sections.get("noise", {}).get("eps", 0.01))
    try:
        cfg.eps = _as_list(raw_eps)
        for e in cfg.eps:
            if not (np.isfinite(e) and e > 0):
                errors.append(f"noise.eps: must be > 0, got {e!r}")
    except (TypeError, ValueError):
        errors.append(f"noise.eps: expected a number or list, got {raw_eps!r}")

    model_ok = False
    if "model" in sections and "kind" in sections["model"]:
        try:
            cfg.model = model_from_config(sections)
            model_ok = True
        except (LdpError, ValueError, TypeError, KeyError, IndexError) as exc:
            errors.append(f"model: {exc}")
    try:
        cfg.times = uniform_grid(horizon, steps)
    except LdpError:
        pass  # already reported as a grid error

    if model_ok:
        init = sections.get("initial", {})
        n = cfg.model.n_modes
        try:
            if "coeffs" in init:
                c = np.zeros(n)
                vals = np.atleast_1d(np.asarray(init["coeffs"], dtype=float))
                if vals.size > n:
                    raise ValueError(f"{vals.size} coefficients for {n} modes")
                c[: vals.size] = vals
                cfg.x0 = GalerkinState(c, cfg.model.basis)
            elif "mode" in init:
                cfg.x0 = GalerkinState.unit(cfg.model.basis, int(init["mode"]), float(init.get("amplitude", 1.0)))
            else:
                cfg.x0 = GalerkinState.zeros(cfg.model.basis)
        except (LdpError, ValueError, TypeError, IndexError) as exc:
            errors.append(f"initial: {exc}")

    ctrl = sections.get("control", {})
    for key in ("f_file", "g_file", "minimizer"):
        if key in ctrl:
            ref = (path.parent / str(ctrl[key])) if not Path(str(ctrl[key])).is_absolute() else Path(str(ctrl[key]))
            if not ref.is_file():
                errors.append(f"control.{key}: file not found: {ctrl[key]}")
            else:
                cfg.referenced.append(ref)

    if command in ("rate", "ldp") and "target" not in sections:
        errors.append("target: missing section")
    if errors:
        raise ConfigError(errors)
    return cfg


def _resolve(cfg: RunConfig, key: str) -> Path:
    p = Path(str(cfg.section("control")[key]))
    return p if p.is_absolute() else cfg.path.parent / p


def build_control(cfg: RunConfig) -> ControlPair:
    model, times = cfg.model, cfg.times
    ctrl = cfg.section("control")
    nu = model.jump.measure if model.jump.active else None
    if "minimizer" in ctrl:
        return RateEstimate.read_minimizer(_resolve(cfg, "minimizer"), nu)
    K, n = times.size - 1, model.n_modes
    f = np.zeros((K, n))
    if "f_file" in ctrl:
        _, f = read_csv(_resolve(cfg, "f_file"))
    elif "f_value" in ctrl:
        vals = np.atleast_1d(np.asarray(ctrl["f_value"], dtype=float))
        f[:, : vals.size] = vals
    g = None
    if nu is not None:
        if "g_file" in ctrl:
            _, g = read_csv(_resolve(cfg, "g_file"))
        elif "g_value" in ctrl:
            g = np.tile(np.broadcast_to(np.asarray(ctrl["g_value"], float), (nu.n_cells,)), (K, 1))
    try:
        return ControlPair(times, f, g, nu)
    except LdpError as exc:
        raise ConfigError([f"control: {exc}"]) from exc


def build_target(cfg: RunConfig) -> TargetSpec:
    t = dict(cfg.section("target"))
    n = cfg.model.n_modes
    kind = t.get("kind", "point")

    def vec(key):
        v = np.zeros(n)
        vals = np.atleast_1d(np.asarray(t[key], dtype=float))
        v[: vals.size] = vals
        return v

    try:
        if kind == "point":
            return TargetSpec.point(vec("value"), float(t.get("tol", 1e-3)))
        if kind == "halfspace":
            return TargetSpec.halfspace(vec("direction"), float(t["level"]), float(t.get("tol", 1e-3)))
        if kind == "ball":
            center = vec("value") if "value" in t else np.zeros(n)
            return TargetSpec.ball(center, float(t["level"]))
        if kind == "whole":
            return TargetSpec.whole()
    except KeyError as exc:
        raise ConfigError([f"target.{exc.args[0]}: missing key"]) from exc
    raise ConfigError([f"target.kind: unknown kind {kind!r}"])


def rate_options(cfg: RunConfig) -> RateOptions:
    r = cfg.section("rate")
    kw = {k: r[k] for k in ("mu0", "mu_factor", "rounds", "restarts", "max_iter", "fd", "gradient", "seed") if k in r}
    try:
        return RateOptions(threads=cfg.threads, **kw)
    except (LdpError, TypeError) as exc:
        raise ConfigError([f"rate: {exc}"]) from exc


# -- commands ------------------------------------------------------------------------
def cmd_simulate(cfg: RunConfig, out: Path) -> list[Path]:
    from .spde import SimParams, simulate_controlled_spde

    control = build_control(cfg)
    levels = []
    written = []
    for eps in cfg.eps:
        params = SimParams(eps, cfg.times, cfg.paths, cfg.seed, cfg.threads)
        ens = simulate_controlled_spde(cfg.model, params, control, cfg.x0)
        summary = ens.summary()
        summary["controlled"] = bool(np.any(control.f) or control.g is not None)
        levels.append(summary)
        if cfg.section("noise").get("per_path_csv", False):
            written += ens.write_path_csvs(out / f"paths_eps_{eps:.6g}")
    written.append(write_json(out / "summary.json", {"command": "simulate", "levels": levels}))
    return written


def cmd_skeleton(cfg: RunConfig, out: Path) -> list[Path]:
    control = build_control(cfg)
    traj = solve_skeleton(cfg.model, control, cfg.x0)
    audit = energy_audit(traj, cfg.model, control)
    return [traj.to_csv(out / "trajectory.csv"),
            write_json(out / "audit.json", {"lhs": audit.lhs, "rhs": audit.rhs, "passed": audit.passed,
                                             "tol": audit.tol, "cost": control.cost()})]


def cmd_rate(cfg: RunConfig, out: Path) -> list[Path]:
    target = build_target(cfg)
    est = minimize_rate(cfg.model, target, cfg.x0, cfg.times, opts=rate_options(cfg))
    data = est.to_dict()
    data["target"] = target.to_dict()
    model = cfg.model
    if est.trajectory is not None and model.is_linear and model.diffusion.kind == "additive" and not model.jump.active:
        data["gaussian_oracle"] = gaussian_rate_oracle(model, est.trajectory)
    written = [write_json(out / "rate.json", data)]
    if est.trajectory is not None:
        written.append(est.trajectory.to_csv(out / "trajectory.csv"))
    return written


def cmd_check(cfg: RunConfig, out: Path) -> tuple[list[Path], int]:
    h = cfg.section("hypotheses")
    report = check_hypotheses(cfg.model, int(h.get("samples", 1000)), float(h.get("radius", 5.0)),
                              int(h.get("seed", cfg.seed)), float(cfg.times[-1]))
    data = report.to_dict()
    data["violations"] = report.violations
    return [write_json(out / "hypotheses.json", data)], report.violations


def cmd_condition2(cfg: RunConfig, out: Path) -> list[Path]:
    from .spde import condition2_experiment

    control = build_control(cfg)
    table = condition2_experiment(cfg.model, cfg.eps, control, control, cfg.x0, cfg.times,
                                  cfg.paths, cfg.seed, cfg.threads)
    return [table.to_csv(out / "condition2.csv"),
            write_json(out / "condition2.json", {"rows": table.rows(), "slope": table.slope})]


def cmd_ldp(cfg: RunConfig, out: Path) -> list[Path]:
    from .experiments import ldp_slope_study

    target = build_target(cfg)
    ldp = cfg.section("ldp")
    est = None
    if "rate" not in ldp or ldp.get("tilt", False):
        est = minimize_rate(cfg.model, target, cfg.x0, cfg.times, opts=rate_options(cfg))
    rate_value = float(ldp["rate"]) if "rate" in ldp else est.value
    tilt = est.minimizer if ldp.get("tilt", False) else None
    if len(cfg.eps) < 3:
        raise ConfigError(["noise.eps: the ldp study needs at least three values"])
    report = ldp_slope_study(cfg.model, target, cfg.eps, cfg.paths, rate_value, cfg.seed,
                             grid=cfg.times, x0=cfg.x0, tilt=tilt, threads=cfg.threads)
    return [report.to_json(out / "ldp.json"), report.to_csv(out / "ldp.csv")]


def _write_manifest(out: Path, command: str, cfg: RunConfig, written: list[Path]) -> Path:
    config_hash = file_digest(cfg.path)
    inputs = hashlib.sha256()
    for p in [cfg.path, *cfg.referenced]:
        inputs.update(Path(p).read_bytes())
    lines = [
        f"command: {command}",
        f"config: {cfg.path}",
        f"config_sha256: {config_hash}",
        f"inputs_sha256: {inputs.hexdigest()}",
        f"seed: {cfg.seed}",
        f"threads: {cfg.threads}",
        f"ldpspde: {__version__}",
        f"kernels: {kernels.BACKEND}",
        f"numpy: {np.__version__}",
        f"scipy: {scipy.__version__}",
        f"python: {platform.python_version()}",
        f"created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        "outputs:",
    ]
    lines += [f"  {Path(p).relative_to(out)} sha256={file_digest(p)}" for p in written]
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpspde", description="Small-noise LDP toolkit for SPDEs with jumps.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--eps", type=str, help="comma-separated noise levels")
    return parser


HANDLERS = {
    "simulate": cmd_simulate,
    "skeleton": cmd_skeleton,
    "rate": cmd_rate,
    "check-hypotheses": cmd_check,
    "condition2": cmd_condition2,
    "ldp": cmd_ldp,
}


def dispatch(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    overrides = {"seed": args.seed, "threads": args.threads, "paths": args.paths, "eps": args.eps}
    out = args.out or Path("runs") / args.command
    try:
        cfg = parse_config(args.config, args.command, overrides)
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2
    except LdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = 0
    if isinstance(result, tuple):
        result, violations = result
        status = 1 if violations else 0
    _write_manifest(out, args.command, cfg, result)
    print(f"wrote {len(result)} file(s) to {out}")
    return status


def main() -> None:
    sys.exit(dispatch())
