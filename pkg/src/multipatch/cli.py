"""Command-line interface: validated flat configuration, one subcommand per
library operation, reproducible run directories.

Configuration is a flat ``key = value`` schema with dotted sections
(``model.alpha``, ``solver.accuracy``, ...).  Precedence: built-in defaults,
then ``--config`` file entries, then ``--set key=value`` overrides, then
dedicated flags.  Unknown keys are errors, never silently ignored.  Every
run writes its fully resolved configuration back to ``config.echo`` inside
the run directory; parsing that file reproduces the run exactly.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 assertion failure (built-in checks enabled with ``--assert``).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytics import (
    FitnessLandscape,
    ModelParams,
    in_lambda_infinity_ball,
    in_small_delta_region,
    interaction_matrix,
    lambda1,
    lambda_bounds,
    lambda_infinity,
    lambda_prime_at_zero,
    small_delta_index,
    symmetric_pair,
)
from .domain import build_domain, save_field_csv
from .dynamics import classify_fate, initial_condition, simulate, suggested_dt
from .eigen import _auto_m, _auto_radius, lambda_H
from .errors import AcceptanceError, ConfigError, SolverError
from .sweep import (
    SweepSpec,
    _metadata_lines,
    best_third_optimum,
    delta_sweep,
    far_field_check,
    middle_vs_copy,
    region_map,
    write_region_csv,
)

COMMANDS = (
    "eigen", "dynamics", "region-map", "delta-sweep", "far-field",
    "middle-vs-copy", "best-o3", "analytics",
)


# ---------------------------------------------------------------------------
# configuration schema

@dataclass(frozen=True)
class _Spec:
    kind: str          # float | posfloat | nonnegfloat | int | posint | bool
    #                  # | str | floats | range | points | optposfloat
    #                  # | optposint | opttol | choice
    default: object
    help: str
    choices: tuple = ()


def _parse_value(key: str, spec: _Spec, raw: str):
    raw = raw.strip()
    try:
        if spec.kind == "float":
            return float(raw)
        if spec.kind == "posfloat":
            v = float(raw)
            if not v > 0:
                raise ValueError("must be positive")
            return v
        if spec.kind == "nonnegfloat":
            v = float(raw)
            if v < 0:
                raise ValueError("must be nonnegative")
            return v
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "posint":
            v = int(raw)
            if v < 1:
                raise ValueError("must be at least 1")
            return v
        if spec.kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected true/false")
        if spec.kind == "str":
            return raw
        if spec.kind == "floats":
            return tuple(float(p) for p in raw.split(",") if p.strip() != "")
        if spec.kind == "range":
            lo, hi = raw.split(":")
            return (float(lo), float(hi))
        if spec.kind == "points":
            if raw.lower() == "auto":
                return None
            pts = []
            for chunk in raw.split(";"):
                if chunk.strip() == "":
                    continue
                pts.append(tuple(float(p) for p in chunk.split(",")))
            if not pts:
                raise ValueError("no points given")
            return tuple(pts)
        if spec.kind in ("optposfloat", "opttol"):
            if raw.lower() == "auto":
                return None
            v = float(raw)
            if not v > 0:
                raise ValueError("must be positive or 'auto'")
            return v
        if spec.kind == "optposint":
            if raw.lower() == "auto":
                return None
            v = int(raw)
            if v < 2:
                raise ValueError("must be at least 2 or 'auto'")
            return v
        if spec.kind == "choice":
            if raw not in spec.choices:
                raise ValueError(f"expected one of {', '.join(spec.choices)}")
            return raw
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} ({exc})") from None
    raise ConfigError(f"internal: unhandled kind {spec.kind!r} for {key!r}")


def _render_value(spec: _Spec, val) -> str:
    if val is None:
        return "auto"
    if spec.kind in ("float", "posfloat", "nonnegfloat", "optposfloat", "opttol"):
        return f"{val:.17g}"
    if spec.kind == "bool":
        return "true" if val else "false"
    if spec.kind == "floats":
        return ",".join(f"{v:.17g}" for v in val)
    if spec.kind == "range":
        return f"{val[0]:.17g}:{val[1]:.17g}"
    if spec.kind == "points":
        return ";".join(",".join(f"{c:.17g}" for c in pt) for pt in val)
    return str(val)


_RUN = {
    "run.output": _Spec("str", "runs", "base directory for run artifacts"),
    "run.assert": _Spec("bool", False, "enable built-in result assertions (exit 4 on failure)"),
}

_MODEL = {
    "model.n": _Spec("int", 2, "phenotype space dimension (1-3)"),
    "model.hosts": _Spec("posint", 2, "number of hosts H"),
    "model.alpha": _Spec("posfloat", 1.0, "selection strength"),
    "model.mu": _Spec("posfloat", math.sqrt(2.0), "mutation scale"),
    "model.delta": _Spec("nonnegfloat", 1.0, "migration rate"),
    "model.r_max": _Spec("float", 1.0, "maximal fitness"),
    "model.beta": _Spec("nonnegfloat", 1.0, "half-spacing of the host pair on the first axis"),
    "model.optima": _Spec("points", None,
                          "explicit host optima 'x,y;x,y;...' (auto: pair at +-beta)"),
}

_SOLVER = {
    "solver.accuracy": _Spec("posfloat", 1e-3, "eigenvalue accuracy target for the grid ladder"),
    "solver.tol": _Spec("opttol", None, "per-grid residual tolerance (auto: from accuracy)"),
    "solver.radius": _Spec("optposfloat", None, "starting box half-width (auto: derived)"),
    "solver.m": _Spec("optposint", None, "starting nodes per axis (auto: derived)"),
    "solver.max_rungs": _Spec("posint", 16, "refinement ladder length limit"),
}

_KIND = {
    "solver.kind": _Spec("choice", "standard", "operator variant",
                         ("standard", "loss")),
}

_DYNAMICS = {
    "dynamics.dt": _Spec("optposfloat", None, "time step (auto: stability-derived)"),
    "dynamics.t_final": _Spec("posfloat", 40.0, "integration horizon"),
    "dynamics.sample_every": _Spec("posint", 10, "sampling stride in steps"),
    "dynamics.initial": _Spec("choice", "gaussian_at", "initial condition kind",
                              ("gaussian_at", "indicator_box")),
    "dynamics.center": _Spec("floats", (0.0,), "bump center (gaussian_at)"),
    "dynamics.width": _Spec("posfloat", 1.0, "bump width (gaussian_at)"),
    "dynamics.mass": _Spec("posfloat", 1e-4, "initial mass per host (gaussian_at)"),
    "dynamics.box_lower": _Spec("floats", (-1.0,), "box lower corner (indicator_box)"),
    "dynamics.box_upper": _Spec("floats", (1.0,), "box upper corner (indicator_box)"),
    "dynamics.box_height": _Spec("posfloat", 1.0, "box height (indicator_box)"),
    "dynamics.cg_rtol": _Spec("posfloat", 1e-11, "diffusion-solve relative tolerance"),
    "run.save_fields": _Spec("bool", False, "write final per-host fields as CSV"),
}

_MAP = {
    "map.x1": _Spec("range", (-3.5, 3.5), "first-axis extent of the candidate rectangle"),
    "map.x2": _Spec("range", (-3.5, 3.5), "second-axis extent of the candidate rectangle"),
    "map.resolution": _Spec("posint", 71, "grid points per axis"),
    "map.accuracy": _Spec("posfloat", 1e-6, "per-point eigensolve tolerance"),
    "map.workers": _Spec("posint", 1, "process count for grid points"),
    "map.radius": _Spec("optposfloat", None, "common-grid half-width override"),
    "map.m": _Spec("optposint", None, "common-grid nodes-per-axis override"),
}

_SCHEMAS: dict[str, dict[str, _Spec]] = {
    "eigen": {**_RUN, **_MODEL, **_SOLVER, **_KIND,
              "run.save_fields": _Spec("bool", False,
                                       "write eigenvector fields as CSV")},
    "dynamics": {**_RUN, **_MODEL, **_SOLVER, **_DYNAMICS},
    "region-map": {**_RUN,
                   "model.alpha": _MODEL["model.alpha"],
                   "model.mu": _MODEL["model.mu"],
                   "model.delta": _MODEL["model.delta"],
                   "model.r_max": _MODEL["model.r_max"],
                   "model.beta": _MODEL["model.beta"],
                   **_MAP},
    "delta-sweep": {**_RUN,
                    **{k: v for k, v in _MODEL.items() if k != "model.delta"},
                    "solver.accuracy": _SOLVER["solver.accuracy"],
                    "solver.radius": _SOLVER["solver.radius"],
                    "solver.m": _SOLVER["solver.m"],
                    "sweep.deltas": _Spec("floats", (0.0, 0.1, 1.0, 10.0),
                                          "migration rates, ascending")},
    "far-field": {**_RUN,
                  "model.alpha": _MODEL["model.alpha"],
                  "model.mu": _MODEL["model.mu"],
                  "model.delta": _MODEL["model.delta"],
                  "model.r_max": _MODEL["model.r_max"],
                  "model.beta": _MODEL["model.beta"],
                  "solver.accuracy": _Spec("posfloat", 1e-5,
                                           "per-solve residual tolerance"),
                  "solver.radius": _SOLVER["solver.radius"],
                  "solver.m": _SOLVER["solver.m"],
                  "far.distances": _Spec("floats", (5.0, 10.0, 20.0),
                                         "third-host distances on the second axis")},
    "middle-vs-copy": {**_RUN,
                       "model.alpha": _MODEL["model.alpha"],
                       "model.mu": _MODEL["model.mu"],
                       "model.delta": _MODEL["model.delta"],
                       "model.r_max": _MODEL["model.r_max"],
                       "solver.accuracy": _Spec("posfloat", 1e-5,
                                                "per-solve residual tolerance"),
                       "mc.betas": _Spec("floats", (0.5, 1.0, 2.0, 4.0, 6.0),
                                         "half-spacings, ascending")},
    "best-o3": {**_RUN,
                "model.alpha": _MODEL["model.alpha"],
                "model.mu": _MODEL["model.mu"],
                "model.delta": _MODEL["model.delta"],
                "model.r_max": _MODEL["model.r_max"],
                "model.beta": _MODEL["model.beta"],
                "best.accuracy": _Spec("posfloat", 1e-6,
                                       "per-solve residual tolerance"),
                "best.bracket_tol": _Spec("optposfloat", None,
                                          "line-search bracket width (auto: from beta)")},
    "analytics": {**_RUN, **_MODEL,
                  "analytics.o3": _Spec("points", None,
                                        "third-host candidate to classify (single point)")},
}

# flag name -> config key; applied after --set overrides
_FLAGS = {
    "alpha": "model.alpha", "mu": "model.mu", "delta": "model.delta",
    "r_max": "model.r_max", "beta": "model.beta", "n": "model.n",
    "hosts": "model.hosts", "optima": "model.optima",
    "accuracy": "solver.accuracy", "tol": "solver.tol",
    "radius": "solver.radius", "m": "solver.m", "kind": "solver.kind",
    "dt": "dynamics.dt", "t_final": "dynamics.t_final",
    "initial": "dynamics.initial", "mass": "dynamics.mass",
    "sample_every": "dynamics.sample_every",
    "resolution": "map.resolution", "workers": "map.workers",
    "x1": "map.x1", "x2": "map.x2",
    "deltas": "sweep.deltas", "distances": "far.distances",
    "betas": "mc.betas", "bracket_tol": "best.bracket_tol",
    "o3": "analytics.o3",
    "output": "run.output",
}


@dataclass
class RunConfig:
    """One fully resolved, validated run: command plus flat settings."""

    command: str
    settings: dict

    def echo_lines(self) -> list[str]:
        schema = _SCHEMAS[self.command]
        lines = [f"command = {self.command}"]
        for key in sorted(self.settings):
            lines.append(f"{key} = {_render_value(schema[key], self.settings[key])}")
        return lines


def _apply_file(command: str, settings: dict, path) -> None:
    schema = _SCHEMAS[command]
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key == "command":
            if raw != command:
                raise ConfigError(
                    f"{path}:{ln}: file is for command {raw!r}, "
                    f"but {command!r} was requested")
            continue
        if key not in schema:
            raise ConfigError(
                f"{path}:{ln}: unknown configuration key {key!r} "
                f"for command {command!r}")
        settings[key] = _parse_value(key, schema[key], raw)


def _validate_cross(command: str, s: dict) -> None:
    if "model.n" in s and not 1 <= s["model.n"] <= 3:
        raise ConfigError(f"model.n must be 1, 2, or 3, got {s['model.n']}")
    if "model.optima" in s and s["model.optima"] is not None:
        n, hosts = s["model.n"], s["model.hosts"]
        pts = s["model.optima"]
        if len(pts) != hosts:
            raise ConfigError(
                f"model.optima lists {len(pts)} points but model.hosts = {hosts}")
        for pt in pts:
            if len(pt) != n:
                raise ConfigError(
                    f"optimum {pt} has {len(pt)} coordinates but model.n = {n}")
    elif "model.optima" in s and s["model.hosts"] > 2:
        raise ConfigError("model.optima is required when model.hosts > 2")
    if s.get("solver.kind") == "loss" and s.get("model.hosts") != 2:
        raise ConfigError("solver.kind = loss requires model.hosts = 2")
    if command == "dynamics":
        n = s["model.n"]
        for key in ("dynamics.center", "dynamics.box_lower", "dynamics.box_upper"):
            # length-1 defaults broadcast to any n; explicit values must match
            if len(s[key]) not in (1, n):
                raise ConfigError(
                    f"{key} has {len(s[key])} coordinates but model.n = {n}")
    if command == "analytics" and s["analytics.o3"] is not None:
        if len(s["analytics.o3"]) != 1:
            raise ConfigError("analytics.o3 must be a single point")
        if len(s["analytics.o3"][0]) != s["model.n"]:
            raise ConfigError("analytics.o3 dimension must match model.n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); raise instead
        raise ConfigError(message)


def _build_argparser() -> _Parser:
    top = _Parser(prog="multipatch",
                  description="Persistence eigenvalues for multi-host "
                              "phenotype dynamics.")
    sub = top.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        schema = _SCHEMAS[command]
        keys = "\n".join(
            f"  {key:24s} (default {_render_value(spec, spec.default)}) {spec.help}"
            for key, spec in sorted(schema.items()))
        p = sub.add_parser(
            command,
            formatter_class=argparse.RawDescriptionHelpFormatter,
            description=f"configuration keys for '{command}':\n{keys}",
        )
        p.add_argument("--config", metavar="FILE",
                       help="flat key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--assert", dest="assert_flag", action="store_true",
                       help="enable built-in result assertions (exit 4 on failure)")
        for flag, key in sorted(_FLAGS.items()):
            if key in schema:
                p.add_argument(f"--{flag.replace('_', '-')}", dest=f"flag_{flag}",
                               metavar="V", help=f"shorthand for {key}")
    return top


def parse_config(source) -> RunConfig:
    """Build a validated RunConfig from argv (list) or a config file (path).

    A file source must carry a ``command`` key; an argv source names the
    command as the first positional argument.  Precedence for argv:
    defaults, then --config file, then --set overrides, then flags.
    """
    if not isinstance(source, (list, tuple)):
        text = Path(source).read_text()
        command = None
        for line in text.splitlines():
            body = line.split("#", 1)[0].strip()
            if body.startswith("command"):
                command = body.split("=", 1)[1].strip()
                break
        if command is None:
            raise ConfigError(f"config file {source!r} does not set 'command'")
        if command not in _SCHEMAS:
            raise ConfigError(f"unknown command {command!r} in {source!r}")
        settings = {k: spec.default for k, spec in _SCHEMAS[command].items()}
        _apply_file(command, settings, source)
        _validate_cross(command, settings)
        return RunConfig(command=command, settings=settings)

    ns = _build_argparser().parse_args(list(source))
    command = ns.command
    schema = _SCHEMAS[command]
    settings = {k: spec.default for k, spec in schema.items()}
    if ns.config:
        _apply_file(command, settings, ns.config)
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in schema:
            raise ConfigError(
                f"unknown configuration key {key!r} for command {command!r}")
        settings[key] = _parse_value(key, schema[key], raw)
    for flag, key in _FLAGS.items():
        raw = getattr(ns, f"flag_{flag}", None)
        if raw is not None and key in schema:
            settings[key] = _parse_value(key, schema[key], raw)
    if ns.assert_flag:
        settings["run.assert"] = True
    _validate_cross(command, settings)
    return RunConfig(command=command, settings=settings)


# ---------------------------------------------------------------------------
# run-directory plumbing


def _run_dir(cfg: RunConfig) -> Path:
    base = Path(cfg.settings["run.output"])
    base.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    d = base / f"{stamp}-{cfg.command}"
    k = 1
    while d.exists():
        d = base / f"{stamp}-{cfg.command}-{k}"
        k += 1
    d.mkdir()
    latest = base / "latest"
    try:
        if latest.is_symlink() or latest.exists():
            latest.unlink()
        latest.symlink_to(d.name)
    except OSError:
        pass  # symlinks unsupported on this filesystem; runs still land in d
    return d


def _write_csv(path, header_comment: str | None, header: str, rows) -> None:
    with open(path, "w") as fh:
        if header_comment:
            fh.write(header_comment + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                f"{x:.17g}" if isinstance(x, float) else str(x) for x in row
            ) + "\n")


def _landscape(s: dict) -> FitnessLandscape:
    n, hosts = s["model.n"], s["model.hosts"]
    if s["model.optima"] is not None:
        return FitnessLandscape(alpha=s["model.alpha"], r_max=s["model.r_max"],
                                optima=s["model.optima"])
    if hosts == 1:
        return FitnessLandscape(alpha=s["model.alpha"], r_max=s["model.r_max"],
                                optima=((0.0,) * n,))
    if hosts == 2:
        return symmetric_pair(s["model.alpha"], s["model.r_max"],
                              s["model.beta"], n=n)
    raise ConfigError("model.optima is required when model.hosts > 2")


def _params(s: dict) -> ModelParams:
    return ModelParams(_landscape(s), s["model.mu"], s["model.delta"])


def _echo_comment(cfg: RunConfig) -> str:
    return "# " + " ".join(
        f"{k.split('.', 1)[1]}={_render_value(_SCHEMAS[cfg.command][k], v)}"
        for k, v in sorted(cfg.settings.items()) if k.startswith("model."))


# ---------------------------------------------------------------------------
# subcommand bodies (each returns the one-line summary)


def _cmd_eigen(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    params = _params(s)
    res = lambda_H(params, accuracy=s["solver.accuracy"], kind=s["solver.kind"],
                   r0=s["solver.radius"], m0=s["solver.m"],
                   max_rungs=s["solver.max_rungs"], tol=s["solver.tol"])
    H = params.landscape.hosts
    _write_csv(out / "eigen.csv", _echo_comment(cfg),
               "value,residual,outer_iterations,cg_iterations,radius,m",
               [(res.value, res.residual_norm, res.iterations,
                 res.cg_iterations, res.domain.radius, res.domain.m)])
    if s["run.save_fields"]:
        for i in range(1, H + 1):
            save_field_csv(res.fields[i - 1], out / f"phi_{i}.csv")
    summary = f"lambda_{H} = {res.value:.12g} (kind={s['solver.kind']}, m={res.domain.m})"
    if H == 1 and s["solver.kind"] == "standard":
        closed = lambda1(params.landscape.alpha, params.mu,
                         params.landscape.n, params.landscape.r_max)
        gap = abs(res.value - closed)
        summary += f"; closed-form gap {gap:.3e}"
        if s["run.assert"] and gap > 3.0 * s["solver.accuracy"]:
            raise AcceptanceError(
                f"single-host eigenvalue off closed form by {gap:.3e} "
                f"(> 3x accuracy {s['solver.accuracy']:g})")
    elif s["run.assert"] and s["solver.kind"] == "standard":
        b = lambda_bounds(params)
        slack = 3.0 * s["solver.accuracy"]
        if not (b.lower - slack <= res.value <= b.upper + slack):
            raise AcceptanceError(
                f"eigenvalue {res.value:.6g} outside analytic bracket "
                f"[{b.lower:.6g}, {b.upper:.6g}]")
    return summary


def _cmd_dynamics(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    params = _params(s)
    n = params.landscape.n
    radius = s["solver.radius"] if s["solver.radius"] is not None else _auto_radius(params)
    m = s["solver.m"] if s["solver.m"] is not None else _auto_m(params, radius)
    dom = build_domain(n, radius, m)

    def _vec(key) -> tuple:
        v = s[key]
        return tuple(v) * n if len(v) == 1 else tuple(v)

    if s["dynamics.initial"] == "gaussian_at":
        state = initial_condition(params, dom, "gaussian_at",
                                  center=_vec("dynamics.center"),
                                  width=s["dynamics.width"],
                                  mass=s["dynamics.mass"])
    else:
        state = initial_condition(params, dom, "indicator_box",
                                  lower=_vec("dynamics.box_lower"),
                                  upper=_vec("dynamics.box_upper"),
                                  height=s["dynamics.box_height"])
    dt = s["dynamics.dt"]
    if dt is None:
        dt = suggested_dt(params, dom)
    rec = simulate(state, s["dynamics.t_final"], dt,
                   sample_every=s["dynamics.sample_every"],
                   rtol_cg=s["dynamics.cg_rtol"])
    eig = lambda_H(params, accuracy=s["solver.accuracy"],
                   r0=s["solver.radius"], m0=s["solver.m"],
                   max_rungs=s["solver.max_rungs"], tol=s["solver.tol"])
    report = classify_fate(rec, eigenvalue=eig.value)
    H = params.landscape.hosts
    _write_csv(out / "trajectory.csv", _echo_comment(cfg),
               "t," + ",".join(f"mass_{i}" for i in range(1, H + 1)) + ",total",
               [(float(t),) + tuple(float(x) for x in mrow) + (float(tot),)
                for t, mrow, tot in zip(rec.times, rec.masses, rec.total)])
    if s["run.save_fields"]:
        for i, f in enumerate(rec.final.fields(), start=1):
            save_field_csv(f, out / f"density_{i}.csv")
    summary = (f"verdict={report.verdict} lambda_{H}={eig.value:.6g} "
               f"agrees={report.agrees} final_total={rec.total[-1]:.6g} "
               f"dt={dt:.6g} steps={len(rec.times)}")
    if s["run.assert"] and report.agrees is not True:
        raise AcceptanceError(
            f"fate verdict {report.verdict!r} does not match the eigenvalue "
            f"sign ({eig.value:.6g})")
    return summary


def _cmd_region_map(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    spec = SweepSpec(alpha=s["model.alpha"], mu=s["model.mu"],
                     delta=s["model.delta"], r_max=s["model.r_max"],
                     beta=s["model.beta"], x1_range=s["map.x1"],
                     x2_range=s["map.x2"], resolution=s["map.resolution"],
                     accuracy=s["map.accuracy"], workers=s["map.workers"],
                     radius=s["map.radius"], m=s["map.m"])
    rm = region_map(spec)
    write_region_csv(rm, out / "region.csv")
    rows = spec.resolution**2
    positive = int((rm.gain > 0).sum())
    if s["run.assert"]:
        sym = max(float(np.max(np.abs(rm.gain - rm.gain[:, ::-1]))),
                  float(np.max(np.abs(rm.gain - rm.gain[::-1, :]))))
        symmetric_ranges = (
            abs(spec.x1_range[0] + spec.x1_range[1]) < 1e-15
            and abs(spec.x2_range[0] + spec.x2_range[1]) < 1e-15)
        if symmetric_ranges and sym > 2.0 * spec.accuracy:
            raise AcceptanceError(
                f"gain map asymmetry {sym:.3e} exceeds 2x accuracy")
    return (f"lambda2 = {rm.lambda2:.10g}; {rows} grid points, "
            f"{positive} with positive gain")


def _cmd_delta_sweep(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    ls = _landscape(s)
    ds = delta_sweep(ls, s["model.mu"], s["sweep.deltas"],
                     accuracy=s["solver.accuracy"],
                     radius=s["solver.radius"], m=s["solver.m"])
    refs = (f"{_echo_comment(cfg)} lambda1={ds.lambda_one:.17g}"
            f" slope0={ds.slope_zero:.17g} lambda_inf={ds.lambda_inf:.17g}")
    _write_csv(out / "delta.csv", refs, "delta,lambda", ds.rows())
    if s["run.assert"]:
        drops = np.diff(ds.values)
        if drops.size and float(drops.min()) < -2.0 * s["solver.accuracy"]:
            raise AcceptanceError(
                f"eigenvalue ladder decreased by {-float(drops.min()):.3e} "
                "along ascending migration rates")
    return (f"lambda_H over {len(ds.deltas)} rates: "
            f"{ds.values[0]:.8g} .. {ds.values[-1]:.8g} "
            f"(lambda1={ds.lambda_one:.8g}, limit={ds.lambda_inf:.8g})")


def _cmd_far_field(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    ff = far_field_check(s["model.beta"], s["model.alpha"], s["model.mu"],
                         s["model.delta"], s["model.r_max"],
                         s["far.distances"], accuracy=s["solver.accuracy"],
                         radius=s["solver.radius"], m=s["solver.m"])
    refs = (f"{_echo_comment(cfg)} lambda_tilde2={ff.lambda_tilde2:.17g}"
            f" lambda2={ff.lambda2:.17g} bound_applicable={ff.bound_applicable}")
    _write_csv(out / "far.csv", refs, "distance,lambda3,lower,upper", ff.rows())
    gap = ff.lambda_tilde2 - float(ff.lambda3[-1])
    return (f"lambda_tilde2 = {ff.lambda_tilde2:.10g}; far gap at "
            f"d={ff.distances[-1]:g}: {gap:.3e} "
            f"(bounds {'checked' if ff.bound_applicable else 'inapplicable'})")


def _cmd_middle_vs_copy(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    mc = middle_vs_copy(s["mc.betas"], s["model.alpha"], s["model.mu"],
                        s["model.delta"], s["model.r_max"],
                        accuracy=s["solver.accuracy"])
    refs = (f"{_echo_comment(cfg)} lambda1={mc.lambda_one:.17g}"
            f" mid_limit={mc.lambda_one + mc.delta:.17g}"
            f" copy_limit={mc.lambda_one + 0.5 * mc.delta:.17g}")
    _write_csv(out / "middle.csv", refs,
               "beta,lambda_mid,lambda_copy,gap_mid,gap_copy", mc.rows())
    return (f"largest beta={mc.betas[-1]:g}: mid {mc.lambda_mid[-1]:.8g} vs "
            f"copy {mc.lambda_copy[-1]:.8g} (limit gaps "
            f"{mc.gap_mid[-1]:.2e}, {mc.gap_copy[-1]:.2e})")


def _cmd_best_o3(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    bt = best_third_optimum(s["model.beta"], s["model.alpha"], s["model.mu"],
                            s["model.delta"], s["model.r_max"],
                            accuracy=s["best.accuracy"],
                            bracket_tol=s["best.bracket_tol"])
    _write_csv(out / "best.csv", _echo_comment(cfg),
               "a_star,lambda3_min,lambda2,lambda3_copy,evaluations,used_fallback",
               [(bt.a_star, bt.lambda3_min, bt.lambda2, bt.lambda3_copy,
                 bt.evaluations, int(bt.used_fallback))])
    return (f"best third optimum a* = {bt.a_star:.6g}: "
            f"lambda3 {bt.lambda3_min:.8g} < lambda2 {bt.lambda2:.8g} "
            f"({bt.note})")


def _cmd_analytics(cfg: RunConfig, out: Path) -> str:
    s = cfg.settings
    params = _params(s)
    ls = params.landscape
    rows: list[tuple] = []
    lam1 = lambda1(ls.alpha, params.mu, ls.n, ls.r_max)
    rows.append(("lambda1", lam1))
    b = lambda_bounds(params)
    rows.append(("bound_lower", b.lower))
    rows.append(("bound_upper", b.upper))
    rows.append(("bound_crude", b.crude_upper))
    rows.append(("lambda_infinity", lambda_infinity(params)))
    if ls.hosts >= 2:
        rows.append(("interaction_top", interaction_matrix(params).top_eigenvalue))
        rows.append(("slope_zero", lambda_prime_at_zero(params)))
    summary = f"lambda1 = {lam1:.10g}, bracket [{b.lower:.10g}, {b.upper:.10g}]"
    if s["analytics.o3"] is not None:
        o3 = s["analytics.o3"][0]
        beta = s["model.beta"]
        k = small_delta_index(o3, beta, ls.alpha, params.mu)
        weak = in_small_delta_region(o3, beta, ls.alpha, params.mu)
        strong = in_lambda_infinity_ball(o3, beta)
        rows.append(("small_delta_index", k))
        rows.append(("weak_region", weak))
        rows.append(("strong_region", strong))
        summary += f"; o3 {o3}: index {k:.6g} ({weak} weak, {strong} strong)"
    _write_csv(out / "analytics.csv", _echo_comment(cfg), "quantity,value", rows)
    return summary


_BODIES = {
    "eigen": _cmd_eigen,
    "dynamics": _cmd_dynamics,
    "region-map": _cmd_region_map,
    "delta-sweep": _cmd_delta_sweep,
    "far-field": _cmd_far_field,
    "middle-vs-copy": _cmd_middle_vs_copy,
    "best-o3": _cmd_best_o3,
    "analytics": _cmd_analytics,
}


def run(cfg: RunConfig) -> Path:
    """Execute one configured run; returns the artifact directory.

    Raises ConfigError, SolverError, or AcceptanceError; ``main`` maps
    these to exit codes 2, 3, and 4.
    """
    out = _run_dir(cfg)
    (out / "config.echo").write_text("\n".join(cfg.echo_lines()) + "\n")
    (out / "run.meta").write_text("\n".join(_metadata_lines({})) + "\n")
    summary = _BODIES[cfg.command](cfg, out)
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    print(f"artifacts: {out}")
    return out


def main(argv=None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = parse_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except (ConfigError, ValueError) as exc:
        # library preconditions reject bad settings with ValueError
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except AcceptanceError as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
