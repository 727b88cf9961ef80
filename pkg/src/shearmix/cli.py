"""Config-driven command line for bounds, spectra, evolution and simulation.

Every run reads one JSON config, writes its artifacts into an output
directory, and finishes with a manifest listing each artifact with its
SHA-256 digest, so any artifact can be regenerated bit-identically from the
config alone.

Config schema (unknown keys anywhere are rejected)::

    {
      "task": "bounds" | "spectrum" | "evolve" | "simulate" | "validate" | "report",
      "velocity": { "kind": ..., ... },     # required except for validate/report
      "seed": 0,                            # optional, overridden by --seed
      "out_dir": "out",                     # optional, overridden by --out
      "params": { ... task-specific ... }
    }

Velocity kinds and their parameters:

    piecewise_constant: breakpoints [x0=domain start, ...], values, domain?
    piecewise_linear:   knots, values, domain?
    grid:               samples, domain?
    sine:               amplitude, frequency, phase?
    sawtooth:           amplitude
    heaviside:          high?, low?
    binary_cascade:     c, tail_tol?

`domain` is "torus" (default) or [a, b].

Task parameter blocks (all optional, with defaults):

    bounds:   grid_n, eps_grid, flatness_interval, j_points
    spectrum: k, boundary, n, s_points, discretization
    evolve:   t_end, samples, k_max, nx, ny, initial ("cos_y" | "cos_xy" |
              "random"), snapshots (count of field dumps)
    simulate: start [x, y], t_end, dt, n_paths, bins, y_integrator,
              geometry, kill_interval?
    validate: criteria (list of ids, default all)
    report:   (none; reads artifacts already in the output directory)

Exit codes: 0 success, 1 configuration error, 2 validation-suite failure,
3 numeric failure during a task.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import evolve, functionals, mcsim, validation
from .spectral import make_operator, resolvent_gap
from .velocity import field_from_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


_TASKS = ("bounds", "spectrum", "evolve", "simulate", "validate", "report")

_PARAM_KEYS = {
    "bounds": {"grid_n", "eps_grid", "flatness_interval", "j_points"},
    "spectrum": {"k", "boundary", "n", "s_points", "discretization"},
    "evolve": {"t_end", "samples", "k_max", "nx", "ny", "initial", "snapshots"},
    "simulate": {"start", "t_end", "dt", "n_paths", "bins", "y_integrator",
                 "geometry", "kill_interval"},
    "validate": {"criteria"},
    "report": set(),
}


def load_config(path):
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"task", "velocity", "seed", "out_dir", "params", "workers"}
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    task = raw.get("task")
    if task not in _TASKS:
        raise ConfigError(f"task must be one of {_TASKS}, got {task!r}")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    extra = set(params) - _PARAM_KEYS[task]
    if extra:
        raise ConfigError(f"unknown params for task {task!r}: {sorted(extra)}")
    if task in ("bounds", "spectrum", "evolve", "simulate"):
        if "velocity" not in raw:
            raise ConfigError(f"task {task!r} needs a velocity description")
        try:
            field_from_config(raw["velocity"])
        except ValueError as err:
            raise ConfigError(f"bad velocity description: {err}") from err
    return raw


class Workspace:
    """Output directory plus the manifest of artifacts written into it."""

    def __init__(self, out_dir, config):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.artifacts = []

    def write_text(self, name, text):
        path = self.out / name
        path.write_text(text)
        self._record(name, path.read_bytes())
        return path

    def write_json(self, name, payload):
        return self.write_text(name, json.dumps(payload, indent=1, sort_keys=True) + "\n")

    def _record(self, name, blob):
        self.artifacts.append({
            "name": name,
            "bytes": len(blob),
            "sha256": hashlib.sha256(blob).hexdigest(),
        })

    def record_file(self, name):
        self._record(name, (self.out / name).read_bytes())

    def finish(self):
        manifest = {"config": self.config, "artifacts": self.artifacts}
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return path


def _seeded(config, args):
    if args.seed is not None:
        return int(args.seed)
    return int(config.get("seed", 0))


def task_bounds(config, ws, args):
    field = field_from_config(config["velocity"])
    params = config.get("params", {})
    report = functionals.compute_bounds_report(
        field,
        grid_n=int(params.get("grid_n", 512)),
        eps_grid=tuple(params.get("eps_grid", functionals.DEFAULT_EPS_GRID)),
        flatness_interval=params.get("flatness_interval"),
        j_points=int(params.get("j_points", 65)),
    )
    ws.write_json("bounds.json", report.to_json_dict())
    return EXIT_OK


def task_spectrum(config, ws, args):
    field = field_from_config(config["velocity"])
    params = config.get("params", {})
    op = make_operator(
        field,
        k=int(params.get("k", 1)),
        boundary=params.get("boundary", "periodic"),
        n=int(params.get("n", 256)),
        discretization=params.get("discretization"),
    )
    summary = resolvent_gap(op, s_points=int(params.get("s_points", 192)),
                            return_trace=True)
    payload = summary.to_json_dict()
    ws.write_json("spectral_summary.json", payload)
    lines = ["s,sigma_min"]
    lines += [f"{s:.17g},{v:.17g}" for s, v in summary.trace]
    ws.write_text("sweep.csv", "\n".join(lines) + "\n")
    return EXIT_OK


_INITIALS = ("cos_y", "cos_xy", "random")


def _initial_samples(kind, nx, ny, seed):
    x = np.arange(nx) / nx
    y = np.arange(ny) / ny
    xx, yy = np.meshgrid(x, y, indexing="ij")
    if kind == "cos_y":
        return np.cos(2 * np.pi * yy)
    if kind == "cos_xy":
        return np.cos(2 * np.pi * xx) * np.cos(2 * np.pi * yy)
    if kind == "random":
        rng = np.random.default_rng(seed)
        out = np.zeros((nx, ny))
        for k in range(1, 3):
            for m in range(-2, 3):
                out += rng.normal(scale=0.5) * np.cos(
                    2 * np.pi * (m * xx + k * yy) + rng.uniform(0, 2 * np.pi))
        return out
    raise ConfigError(f"initial must be one of {_INITIALS}, got {kind!r}")


def task_evolve(config, ws, args):
    field = field_from_config(config["velocity"])
    params = config.get("params", {})
    nx = int(params.get("nx", 64))
    ny = int(params.get("ny", 17))
    u0 = _initial_samples(params.get("initial", "cos_y"), nx, ny, _seeded(config, args))
    trace = evolve.relax_trace(
        u0, field,
        t_end=float(params.get("t_end", 10.0)),
        n_samples=int(params.get("samples", 33)),
        k_max=params.get("k_max"),
    )
    trace.to_csv(ws.out / "decay.csv")
    ws.record_file("decay.csv")
    n_snapshots = int(params.get("snapshots", 0))
    if n_snapshots:
        fld = evolve.field_from_samples(u0)
        evo = evolve.Evolution(field, fld.k_max, nx)
        times = np.linspace(0.0, float(params.get("t_end", 10.0)), n_snapshots)
        current, prev_t = fld, 0.0
        for i, t in enumerate(times):
            if t > prev_t:
                current = evo.propagate(current, t - prev_t)
                prev_t = t
            name = f"field-{i:03d}.f64"
            evolve.save_snapshot(ws.out / name, evolve.field_to_samples(current, ny),
                                 meta={"time": float(t)})
            ws.record_file(name)
            ws.record_file(name + ".json")
    return EXIT_OK


def task_simulate(config, ws, args):
    field = field_from_config(config["velocity"])
    params = config.get("params", {})
    cfg = mcsim.PathConfig(
        dt=float(params.get("dt", 1e-3)),
        n_paths=int(params.get("n_paths", 100_000)),
        t_end=float(params.get("t_end", 1.0)),
        seed=_seeded(config, args),
        y_integrator=params.get("y_integrator", "left"),
        geometry=params.get("geometry", "torus2"),
        bins=int(params.get("bins", 32)),
        workers=args.workers,
    )
    start = tuple(params.get("start", (0.0, 0.0)))
    kill = params.get("kill_interval")
    hist = mcsim.simulate(start, field, cfg, kill_interval=kill)
    hist.to_csv(ws.out / "histogram.csv")
    ws.record_file("histogram.csv")
    ws.write_json("histogram-meta.json", hist.metadata())
    return EXIT_OK


def task_validate(config, ws, args):
    params = config.get("params", {})
    ids = params.get("criteria")
    results = validation.run_all(ids=ids, progress=print)
    # artifacts must regenerate bit-identically, so timings stay on stdout
    lines = [f"[{'PASS' if r.passed else 'FAIL'}] criterion {r.cid:2d}: {r.name}"
             for r in results]
    payload = [
        {"criterion": r.cid, "name": r.name, "passed": r.passed,
         "details": _jsonable(r.details)}
        for r in results
    ]
    ws.write_json("validation.json", payload)
    ws.write_text("validation.txt", "\n".join(lines) + "\n")
    if all(r.passed for r in results):
        return EXIT_OK
    return EXIT_VALIDATION


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def task_report(config, ws, args):
    """Summarize whatever artifacts previous tasks left in the directory."""
    summary = []
    missing = []
    bounds_path = ws.out / "bounds.json"
    if bounds_path.exists():
        bounds = json.loads(bounds_path.read_text())
        summary.append("bounds report")
        for key in ("oscillation", "lip_correlation", "l2_mixing_rate",
                    "residual_mixing_rate", "gap_bound_correlation_periodic",
                    "plateau_time", "plateau_mass_log",
                    "flatness_time", "flatness_mass_log",
                    "doeblin_rho", "doeblin_rho_log"):
            summary.append(f"  {key:36s} {bounds.get(key)}")
    else:
        missing.append("bounds.json")
    spectral_path = ws.out / "spectral_summary.json"
    if spectral_path.exists():
        spectrum = json.loads(spectral_path.read_text())
        summary.append("spectral summary")
        summary.append(f"  {'r_lambda1':36s} {spectrum['r_lambda1']}")
        summary.append(f"  {'s_argmin':36s} {spectrum['s_argmin']}")
        refs = {"sigma_min_gap": spectrum["r_lambda1"]}
        meta = spectrum.get("meta", {})
        comparable = meta.get("boundary") == "periodic" and meta.get("k", 0) >= 1
        if bounds_path.exists() and comparable:
            # for periodic modes k >= 1 the mode gap dominates the k = 1
            # correlation bound (the bound only improves with the mode index)
            bounds = json.loads(bounds_path.read_text())
            ref = bounds["gap_bound_correlation_periodic"]
            refs["gap_bound_correlation_periodic"] = ref
            gap_table = bounds.get("gap_bound_residual_table", {})
            if gap_table:
                refs["gap_bound_residual_max"] = max(gap_table.values())
            ordered = spectrum["r_lambda1"] >= ref - 1e-8
            summary.append(f"  gap >= correlation bound: {'PASS' if ordered else 'FAIL'}"
                           f" ({spectrum['r_lambda1']:.3e} vs {ref:.3e})")
        ws.write_json("spectrum-references.json", refs)
    else:
        missing.append("spectral_summary.json")
    decay_path = ws.out / "decay.csv"
    if decay_path.exists():
        rows = decay_path.read_text().strip().splitlines()[1:]
        flags = [row.split(",")[3] for row in rows]
        bad = sum(1 for f in flags if f == "1")
        summary.append("decay trace")
        summary.append(f"  samples: {len(rows)}, envelope violations: {bad}")
    else:
        missing.append("decay.csv")
    if not summary:
        print("warning: no artifacts found to report on")
        ws.write_text("report.txt", "no artifacts found\n")
        return EXIT_OK
    if missing:
        summary.append("missing inputs: " + ", ".join(missing))
    text = "\n".join(summary) + "\n"
    print(text, end="")
    ws.write_text("report.txt", text)
    return EXIT_OK


_RUNNERS = {
    "bounds": task_bounds,
    "spectrum": task_spectrum,
    "evolve": task_evolve,
    "simulate": task_simulate,
    "validate": task_validate,
    "report": task_report,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="shearmix",
        description="mixing bounds and validation for diffusion with shear transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for task in _TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        p.add_argument("--config", required=(task not in ("validate", "report")),
                       help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="worker count hint")
    args = parser.parse_args(argv)

    if args.config is not None:
        try:
            config = load_config(args.config)
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        if config["task"] != args.command:
            print(f"config error: config task {config['task']!r} does not match "
                  f"subcommand {args.command!r}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        config = {"task": args.command, "params": {}}

    out_dir = args.out or config.get("out_dir") or "shearmix-out"
    ws = Workspace(out_dir, config)
    try:
        status = _RUNNERS[args.command](config, ws, args)
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    ws.finish()
    return status


if __name__ == "__main__":
    sys.exit(main())
