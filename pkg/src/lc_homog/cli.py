"""Command-line entry point ``lc-homog``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cell_problems import CellProblemError, compute_effective_tensors, solve_scalar_cell, solve_stokes_cell
from .config import ConfigError, load_config
from .geometry import GeometryError, build_perforated_grid, build_unit_cell_grid
from .harness import SweepAborted, SweepReport, run_sweep, zero_extend
from .io import IoError, write_energy, write_json, write_report, write_vtk
from .limit import NotSPD, build_g, darcy_solve, run_effective_director
from .linalg import SolveConfig, SolverError
from .perforated import MaxPrincipleViolation, StaggeredOps, run_simulation

log = logging.getLogger("lc_homog")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERDICT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lc-homog", description="Homogenisation toolkit for perforated nematic flows.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("tensors", "effective tensors from the unit-cell problems"),
                       ("simulate", "coupled Stokes/director run on a perforated domain"),
                       ("limit", "Darcy and effective director limit problems"),
                       ("sweep", "eps-sweep with convergence verdicts"),
                       ("report", "re-render a sweep report.json")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON configuration file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--log", default="WARNING", help="logging level")
    return p


def _threads(args) -> int:
    env = os.environ.get("LC_HOMOG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("", f"LC_HOMOG_THREADS={env!r} is not an integer")
    return max(1, args.threads)


def cmd_tensors(cfg, out: Path, threads: int) -> int:
    v = cfg.values
    solver = SolveConfig(rel_tol=v["rel_tol"])
    t = compute_effective_tensors(cfg.shape, v["n"], solver)
    write_json(t.to_dict(), out / "tensors.json")
    grid = build_unit_cell_grid(v["n"], cfg.shape)
    ops = StaggeredOps(grid)
    chi = solve_scalar_cell(grid, solver)
    fields = {"mask": grid.fluid.astype(np.int8),
              "chi": np.stack([zero_extend(c, grid) for c in chi])}
    if not cfg.shape.is_none:
        omega, _ = solve_stokes_cell(grid, solver)
        for i, w in enumerate(omega):
            fields[f"omega{i + 1}"] = np.stack(ops.velocity_to_cells(w))
    write_vtk(fields, grid.N, out / "cell.vtk", title="unit cell correctors")
    print(json.dumps({"theta": t.theta, "A": t.a.tolist(),
                      "B": None if t.b is None else t.b.tolist()}))
    return EXIT_OK


def cmd_simulate(cfg, out: Path, threads: int) -> int:
    sim = cfg.sim_config()
    grid = build_perforated_grid(sim.grid)
    ops = StaggeredOps(grid)
    snaps, ledger, exts = run_simulation(sim, grid)
    for k, (s, P) in enumerate(zip(snaps, exts)):
        write_vtk({"mask": grid.fluid.astype(np.int8),
                   "u": np.stack(ops.velocity_to_cells(s.u)),
                   "p": zero_extend(s.p, grid), "d": zero_extend(s.d, grid),
                   "P_eps": P.values}, grid.N, out / f"snapshot_{k:03d}.vtk",
                  title=f"t={s.t!r}")
    write_energy(ledger.history, out / "energy.csv")
    summary = dict(dt=ledger.dt, steps=ledger.steps, min_slack=ledger.min_slack,
                   energy_scale=ledger.scale(), max_abs_d=ledger.max_abs_d,
                   max_divergence=ledger.max_divergence, snapshot_times=[s.t for s in snaps],
                   config=cfg.echo())
    write_json(summary, out / "summary.json")
    print(json.dumps({k: summary[k] for k in ("steps", "min_slack", "max_abs_d")}))
    return EXIT_OK


def cmd_limit(cfg, out: Path, threads: int) -> int:
    v = cfg.values
    t = compute_effective_tensors(cfg.shape, v["n_cell"])
    if t.b is None:
        raise CellProblemError("the Darcy limit needs an obstacle (no permeability without one)")
    N = v["N"]
    times = v.get("snapshot_times") or [float(x) for x in np.linspace(0, v["t_end"], 11)]
    g = build_g(t, cfg.expr("F"), cfg.expr("H"), 0.0, N)
    darcy = darcy_solve(t.b, g, N, SolveConfig(rel_tol=v["rel_tol"]))
    diag: dict = {}
    states = run_effective_director(t.a, t.theta, cfg.expr("d_init"), v["t_end"], v["dt"], N,
                                    snapshot_times=times, diagnostics=diag)
    ux, uy = darcy.u
    uc = np.stack([0.5 * (ux[:-1] + ux[1:]), 0.5 * (uy[:, :-1] + uy[:, 1:])])
    for k, s in enumerate(states):
        write_vtk({"u": uc, "P": darcy.p_limit, "d": s.d}, N, out / f"limit_{k:03d}.vtk",
                  title=f"t={s.t!r}")
    h = 1.0 / N
    summary = dict(norms=dict(u_L2=float(np.sqrt(((ux ** 2).sum() + (uy ** 2).sum()) * h * h)),
                              P_L2=float(np.sqrt((darcy.p_limit ** 2).sum() * h * h))),
                   residuals=darcy.residuals, director=dict(dt=diag["dt"], steps=diag["steps"],
                                                            max_abs_d=diag["max_abs_d"]),
                   tensors=t.to_dict())
    write_json(summary, out / "limit.json")
    print(json.dumps(summary["norms"]))
    return EXIT_OK


def _verdict_exit(report: SweepReport) -> int:
    print(json.dumps(report.verdicts))
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_sweep(cfg, out: Path, threads: int) -> int:
    try:
        report = run_sweep(cfg.sweep_config(threads))
    except SweepAborted as exc:
        write_report(exc.report, out)
        raise
    write_report(report, out)
    return _verdict_exit(report)


def cmd_report(cfg, out: Path, threads: int) -> int:
    path = Path(cfg.values["input"])
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("/input", f"cannot read report: {exc}") from exc
    report = SweepReport(records=data.get("records", []), verdicts=data.get("verdicts", {}),
                         runtime=data.get("runtime", 0.0), incomplete=data.get("incomplete", False),
                         error=data.get("error"), tensors=data.get("tensors"),
                         limit=data.get("limit", {}))
    write_report(report, out)
    return _verdict_exit(report)


COMMANDS = {"tensors": cmd_tensors, "simulate": cmd_simulate, "limit": cmd_limit,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args)
        cfg = load_config(args.config, args.command)
        if cfg.command != args.command:
            raise ConfigError("/command", f"config is for {cfg.command!r}, not {args.command!r}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, threads)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, CellProblemError, MaxPrincipleViolation, NotSPD, SweepAborted,
            IoError, ValueError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
