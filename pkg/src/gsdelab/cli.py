"""Command-line front end.

    python -m gsdelab <command> --scenario NAME [options]

Commands: simulate, jacobian, kernel, wentzell, certify, converge.  Every
command writes ``report.json`` into ``--out``; the other artifacts depend on
the command.  Exit status is 0 when all checked properties hold, 2 when a
property fails and 1 on usage or solver errors.

Options may also come from an INI file given with ``--config``; keys live
in a ``[run]`` section and use the long flag names with dashes or
underscores.  Flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .convergence import fit_order
from .errors import GsdeError
from .grid import GridSpec, trapezoid
from .integral_check import check_conditions, monte_carlo_constancy
from .jacobian_volume import integrate_jacobian, write_jacobian_csv
from .kernel import GridDensity, check_normalization, evolve_kernel, write_density_snapshots
from .noise import SeedSpec, generate_ensemble, generate_noise, refine_noise
from .scenarios import REGISTRY, get_scenario, perturbed, polynomial_field
from .simulate import integrate_path, write_paths_csv
from .wentzell import RandomFieldState, run_wentzell, wentzell_report, write_json

COMMANDS = ("simulate", "jacobian", "kernel", "wentzell", "certify", "converge")
PASS, ERROR, PROPERTY_FAILURE = 0, 1, 2

DEFAULT_PATHS = {"simulate": 10, "jacobian": 5, "kernel": 0, "wentzell": 50, "certify": 0, "converge": 200}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    command: str
    scenario: str
    seed: int = 0
    horizon: float = None
    steps: int = None
    grid: int = None
    paths: int = None
    levels: tuple = None
    out: str = "."
    tol: float = None
    perturb_drift: float = 0.0

    def __post_init__(self):
        if self.scenario not in REGISTRY:
            raise UsageError(f"unknown scenario {self.scenario!r}; choose from {', '.join(REGISTRY)}")
        for name in ("horizon", "steps", "grid", "tol"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise UsageError(f"--{name} must be positive")
        if self.paths is not None and self.paths < 0:
            raise UsageError("--paths must be non-negative")
        if self.levels is not None and any(not v > 0 for v in self.levels):
            raise UsageError("--levels must be positive")

    def echo(self):
        out = dict(self.__dict__)
        out["levels"] = None if self.levels is None else list(self.levels)
        del out["out"]
        return out


def _levels(text):
    try:
        return tuple(float(v) for v in str(text).replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse levels {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="gsdelab", description="Jump-diffusion verification laboratory.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", help=f"one of: {', '.join(REGISTRY)}")
    parser.add_argument("--config", help="INI file with a [run] section")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--horizon", type=float, help="final time T")
    parser.add_argument("--steps", type=int, help="time steps on [0, T]")
    parser.add_argument("--grid", type=int, help="cells per dimension for grid solvers")
    parser.add_argument("--paths", type=int, help="number of simulated paths")
    parser.add_argument("--levels", type=_levels, help="refinement levels, comma separated")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--tol", type=float, help="pass tolerance")
    parser.add_argument("--perturb-drift", type=float, dest="perturb_drift", help="add eps * x to the drift")
    return parser


_CASTS = {
    "scenario": str, "seed": int, "horizon": float, "steps": int, "grid": int, "paths": int,
    "levels": _levels, "out": str, "tol": float, "perturb_drift": float,
}


def read_config(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise UsageError(f"cannot read config file {path}")
    if "run" not in parser:
        raise UsageError(f"{path} has no [run] section")
    out = {}
    for key, value in parser["run"].items():
        name = key.replace("-", "_")
        if name not in _CASTS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            out[name] = _CASTS[name](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    return out


def make_config(args):
    values = read_config(args.config) if args.config else {}
    for name in _CASTS:
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    if "scenario" not in values:
        raise UsageError("--scenario is required")
    return ScenarioConfig(command=args.command, **values)


def _combined_checksum(noises):
    digest = hashlib.sha256()
    for nz in noises:
        digest.update(nz.checksum().encode())
    return digest.hexdigest()[:16]


class _Run:
    """Resolved scenario plus derived discretization for one command."""

    def __init__(self, config):
        self.config = config
        sc = get_scenario(config.scenario)
        if config.perturb_drift:
            sc = perturbed(sc, config.perturb_drift)
        self.scenario = sc
        self.T = config.horizon or sc.horizon
        self.h = self.T / config.steps if config.steps else sc.step
        if config.grid:
            sc_grid = sc.grid
            self.grid = GridSpec(sc_grid.lower, sc_grid.upper, (config.grid,) * sc_grid.ndim)
        else:
            self.grid = sc.grid
        paths = config.paths
        self.paths = DEFAULT_PATHS[config.command] if paths is None else paths
        os.makedirs(config.out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.config.out, name)

    def noises(self, count, h=None):
        sc = self.scenario
        return generate_ensemble(self.config.seed, count, self.T, h or self.h, sc.m, sc.system.measure)

    def default_levels(self):
        return (4 * self.h, 2 * self.h, self.h)


def cmd_simulate(run):
    sc = run.scenario
    noises = run.noises(max(run.paths, 1))
    paths = [integrate_path(sc.system, sc.x0, nz) for nz in noises]
    with open(run.path("paths.csv"), "w", newline="") as fh:
        write_paths_csv(paths, fh)
    u = sc.candidate
    drift = [float(np.max(np.abs(u(p.times, p.states) - u(0.0, p.states[0])))) for p in paths]
    metrics = {
        "final_states": [[float(v) for v in p.final] for p in paths],
        "jumps": [int(len(p.jump_indices)) for p in paths],
        "candidate_sup_deviation": drift,
        "step": run.h,
    }
    return metrics, _combined_checksum(noises), True


def cmd_jacobian(run):
    sc = run.scenario
    noises = run.noises(max(run.paths, 1))
    pairs = []
    for nz in noises:
        p = integrate_path(sc.system, sc.x0, nz)
        pairs.append((p, integrate_jacobian(sc.system, p, nz)))
    with open(run.path("jacobian.csv"), "w", newline="") as fh:
        write_jacobian_csv(pairs, fh)
    dets = np.array([jp.dets[-1] for _, jp in pairs])
    metrics = {"final_det": [float(d) for d in dets], "min_abs_det": float(np.min(np.abs(np.concatenate([jp.dets for _, jp in pairs])))), "step": run.h}
    return metrics, _combined_checksum(noises), True


def cmd_kernel(run):
    sc = run.scenario
    noise = generate_noise(SeedSpec(run.config.seed), run.T, run.h, sc.m, sc.system.measure)
    rho0 = GridDensity.from_function(run.grid, sc.rho0)
    steps = noise.steps
    every = max(1, steps // 10)
    series = evolve_kernel(sc.system, rho0, noise, save_every=every)
    manifest = write_density_snapshots(series, run.config.out, noise_checksum=noise.checksum())
    mass = np.array([check_normalization(s) for s in series])
    tol = run.config.tol or 2e-2
    metrics = {"times": manifest["times"], "mass": [float(v) for v in mass], "max_mass_error": float(np.max(np.abs(mass - 1.0)))}
    ok = metrics["max_mass_error"] <= tol
    if sc.exact_kernel is not None:
        last = series[-1]
        exact = sc.exact_kernel(last.time, run.grid.nodes)
        metrics["l1_error"] = float(trapezoid(np.abs(last.values - exact), run.grid))
    metrics["mass_tol"] = tol
    return metrics, noise.checksum(), ok


def cmd_wentzell(run):
    sc = run.scenario
    fs, z0_func = polynomial_field(sc.n, sc.m)
    z0 = RandomFieldState.from_function(run.grid, z0_func)
    levels = sorted(run.config.levels or run.default_levels(), reverse=True)
    fine = run.noises(max(run.paths, 1), h=levels[-1])
    gaps, rows = [], []
    for h in levels:
        noises = fine if h == levels[-1] else [refine_noise(h, nz) for nz in fine]
        result = run_wentzell(fs, sc.system, z0, sc.x0, noises)
        gap = float(result.gap.mean())
        gaps.append(gap)
        rows.append({"level": h, "mean_gap": gap, "max_gap": float(result.gap.max())})
    checksum = _combined_checksum(fine)
    report = wentzell_report(levels, gaps, checksum, {"rows": rows, "paths": len(fine)})
    write_json(report, run.path("wentzell_compare.json"))
    fit = report["fit"]
    ok = fit["order"] == "exact" or fit["order"] >= (run.config.tol or 0.4)
    return report, checksum, ok


def cmd_certify(run):
    sc = run.scenario
    check_grid = GridSpec(run.grid.lower, run.grid.upper, (run.config.grid or 40,) * run.grid.ndim)
    times = np.linspace(0.0, run.T, 5)
    report = check_conditions(sc.system, sc.candidate, check_grid, times, tol=run.config.tol)
    print(report.table())
    out = {"conditions": report.as_dict()}
    ok = report.passed
    checksum = ""
    if run.paths:
        levels = sorted(run.config.levels or run.default_levels(), reverse=True)
        stats = monte_carlo_constancy(sc.system, sc.candidate, sc.x0, run.config.seed, run.paths, run.T, levels)
        out["monte_carlo"] = stats.as_dict()
        if stats.fit is not None and stats.plateau():
            ok = False
        checksum = _combined_checksum(generate_ensemble(run.config.seed, run.paths, run.T, levels[-1], sc.m, sc.system.measure))
    out["verdict"] = "pass" if ok else "fail"
    write_json(out, run.path("certify.json"))
    return out, checksum, ok


def _kernel_study(run, levels):
    sc = run.scenario
    grid = run.grid
    width = grid.upper[0] - grid.lower[0]
    speed = float(np.max(np.abs(sc.system.a(0.0, np.zeros(sc.n)))))
    rows, errors = [], []
    checksum = ""
    for dx in levels:
        cells = int(round(width / dx))
        g = GridSpec(grid.lower, grid.upper, (cells,) * grid.ndim)
        h = run.T / int(np.ceil(run.T * speed / (0.5 * g.spacing[0]))) if speed else run.h
        noise = generate_noise(SeedSpec(run.config.seed), run.T, h, sc.m, sc.system.measure)
        checksum = noise.checksum()
        last = evolve_kernel(sc.system, GridDensity.from_function(g, sc.rho0), noise)[-1]
        err = float(trapezoid(np.abs(last.values - sc.exact_kernel(last.time, g.nodes)), g))
        rows.append({"level": dx, "cells": cells, "step": h, "l1_error": err})
        errors.append(err)
    return rows, errors, checksum


def _path_study(run, levels):
    sc = run.scenario
    stats = monte_carlo_constancy(sc.system, sc.candidate, sc.x0, run.config.seed, max(run.paths, 1), run.T, levels, relative=False)
    rows = [dict(lv.as_dict(), level=lv.step) for lv in stats.levels]
    checksum = _combined_checksum(generate_ensemble(run.config.seed, max(run.paths, 1), run.T, min(levels), sc.m, sc.system.measure))
    return rows, [lv.mean for lv in stats.levels], checksum


def cmd_converge(run):
    levels = run.config.levels
    if levels is None or len(levels) < 3:
        raise UsageError("converge needs at least 3 --levels")
    levels = sorted(levels, reverse=True)
    kernel = run.scenario.exact_kernel is not None
    rows, errors, checksum = (_kernel_study if kernel else _path_study)(run, levels)
    fit = fit_order(levels, errors)
    metrics = {"study": "kernel-l1" if kernel else "path-constancy", "rows": rows, "fit": fit.as_dict()}
    ok = fit.exact or fit.order >= (run.config.tol or 0.4)
    return metrics, checksum, ok


HANDLERS = {
    "simulate": cmd_simulate,
    "jacobian": cmd_jacobian,
    "kernel": cmd_kernel,
    "wentzell": cmd_wentzell,
    "certify": cmd_certify,
    "converge": cmd_converge,
}


def run_command(config):
    """Execute one command; returns ``(report, exit_code)``."""
    start = time.perf_counter()
    run = _Run(config)
    metrics, checksum, ok = HANDLERS[config.command](run)
    report = {
        "command": config.command,
        "config": config.echo(),
        "noise_checksum": checksum,
        "metrics": metrics,
        "verdict": "pass" if ok else "fail",
        "wall_clock": time.perf_counter() - start,
    }
    write_json(report, run.path("report.json"))
    return report, PASS if ok else PROPERTY_FAILURE


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = make_config(args)
        report, code = run_command(config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gsdelab: error: {exc}", file=sys.stderr)
        return ERROR
    except GsdeError as exc:
        print(f"gsdelab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR
    print(f"{config.command} {config.scenario}: {report['verdict']} (report in {os.path.join(config.out, 'report.json')})")
    return code


if __name__ == "__main__":
    sys.exit(main())
