"""Command-line entry point.

    kshomog field sample        --config C [--seed S] [--a A --b B --n N]
    kshomog cell solve          --config C --rho R --n-cells N [--seed S]
    kshomog effective estimate  --config C [--rho R] [--n-cells N] [--n-realizations M]
    kshomog effective rho-sweep --config C
    kshomog pde run             --config C --mode micro|macro [--epsilon E] [--D-star D --chi-star X]
    kshomog experiment epsilon-sweep --config C
    kshomog experiment rho-sweep     --config C

Global flags (accepted by every subcommand): ``--config``, ``--out``,
``--seed``, ``--threads``. Output goes to ``--out`` (default: the config's
``output.directory``). The exit code is 0 iff every assertion passed.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .. import effective as eff
from ..cell_solver import analytic_effective, effective_from_cell, periodize, solve_cell_problems
from ..ks_solver import build_micro_coefficients, run, run_macro
from ..random_fields import make_realization, sample_path
from .config import ConfigError, ExperimentConfig, parse_config
from .experiments import RHO_SWEEP_COLUMNS, epsilon_sweep, rho_sweep_cmd, solver_setup
from .output import Table, emit_csv, emit_report, summary_lines

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_ERROR = 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, default=None, help="overrides cell.base_seed and pde.seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="kshomog", description=__doc__.split("\n\n")[0])
    groups = parser.add_subparsers(dest="group", required=True)

    field = groups.add_parser("field", help="random coefficient fields").add_subparsers(dest="cmd", required=True)
    p = field.add_parser("sample", parents=[common], help="emit y_mid, D, chi on a uniform grid")
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=100.0)
    p.add_argument("--n", type=int, default=100)

    cell = groups.add_parser("cell", help="periodic cell problems").add_subparsers(dest="cmd", required=True)
    p = cell.add_parser("solve", parents=[common], help="one realization's periodized coefficients")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--n-cells", type=int, required=True)
    p.add_argument("--allow-misaligned", action="store_true")

    effg = groups.add_parser("effective", help="Monte-Carlo effective coefficients").add_subparsers(
        dest="cmd", required=True
    )
    p = effg.add_parser("estimate", parents=[common], help="one rho")
    p.add_argument("--rho", type=float, default=None, help="default: last entry of cell.rho_list")
    p.add_argument("--n-cells", type=int, default=None)
    p.add_argument("--n-realizations", type=int, default=None)
    effg.add_parser("rho-sweep", parents=[common], help="all of cell.rho_list")

    pde = groups.add_parser("pde", help="Keller-Segel time integration").add_subparsers(dest="cmd", required=True)
    p = pde.add_parser("run", parents=[common], help="one micro or macro run")
    p.add_argument("--mode", choices=("micro", "macro"), required=True)
    p.add_argument("--epsilon", type=float, default=None, help="micro: default first of pde.epsilon_list")
    p.add_argument("--D-star", dest="D_star", type=float, default=None, help="macro: default reference D*")
    p.add_argument("--chi-star", dest="chi_star", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--stride", type=int, default=None, help="snapshot stride")

    exp = groups.add_parser("experiment", help="experiment drivers with assertions").add_subparsers(
        dest="cmd", required=True
    )
    exp.add_parser("epsilon-sweep", parents=[common])
    exp.add_parser("rho-sweep", parents=[common])
    return parser


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError([f"--seed: must be an unsigned 64-bit integer, got {args.seed}"])
        cfg = dataclasses.replace(
            cfg,
            cell=dataclasses.replace(cfg.cell, base_seed=args.seed),
            pde=dataclasses.replace(cfg.pde, seed=args.seed),
        )
    return cfg


def _outdir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out if args.out is not None else cfg.output.directory)


def _cmd_field_sample(args, cfg, out: Path) -> int:
    real = make_realization(cfg.field, cfg.cell.base_seed)
    y, D, chi = sample_path(real, args.a, args.b, args.n)
    t = Table(("y_mid", "D", "chi"))
    for row in zip(y, D, chi):
        t.add(*map(float, row))
    print(emit_csv(t, out / "field_sample.csv"))
    return EXIT_OK


def _cmd_cell_solve(args, cfg, out: Path) -> int:
    seed = cfg.cell.base_seed
    field = periodize(make_realization(cfg.field, seed), args.rho, args.n_cells,
                      allow_misaligned=args.allow_misaligned)
    sol = solve_cell_problems(field)
    D_fv, chi_fv = effective_from_cell(sol)
    D_an, chi_an = analytic_effective(field)
    t = Table(("seed", "rho", "D_rho_fv", "chi_rho_fv", "D_rho_analytic", "chi_rho_analytic", "flux_residual"))
    t.add(seed, float(args.rho), D_fv, chi_fv, D_an, chi_an, sol.flux_residual)
    print(emit_csv(t, out / "cell_solve.csv"))
    return EXIT_OK


def _cmd_effective_estimate(args, cfg, out: Path) -> int:
    cell = cfg.cell
    rho = args.rho if args.rho is not None else cell.rho_list[-1]
    n_cells = args.n_cells or eff.n_cells_for(rho, cell.n_cells_per_unit)
    m = args.n_realizations or cell.n_realizations
    est = eff.estimate(cfg.field, rho, n_cells, m, cell.base_seed, threads=args.threads,
                       allow_misaligned=cell.allow_misaligned)
    ref = eff.reference_effective(cfg.field)
    t = Table(RHO_SWEEP_COLUMNS)
    t.add(est.rho, est.n_realizations, est.mean_D, est.se_D, est.mean_chi, est.se_chi, ref.D_star, ref.chi_star)
    print(emit_csv(t, out / "effective_estimate.csv"))
    return EXIT_OK


def _cmd_effective_sweep(args, cfg, out: Path) -> int:
    report = rho_sweep_cmd(cfg, threads=args.threads)
    print(emit_csv(report.tables["rho_sweep"], out / "rho_sweep.csv"))
    return EXIT_OK


def _cmd_pde_run(args, cfg, out: Path) -> int:
    p = cfg.pde
    cfg = dataclasses.replace(
        cfg,
        pde=dataclasses.replace(
            p,
            n=args.n or p.n,
            dt=args.dt or p.dt,
            tau=args.tau or p.tau,
        ),
        output=dataclasses.replace(cfg.output, snapshot_stride=args.stride or cfg.output.snapshot_stride),
    )
    p = cfg.pde
    grid, sc, init = solver_setup(cfg)
    if args.mode == "micro":
        eps = args.epsilon if args.epsilon is not None else (p.epsilon_list[0] if p.epsilon_list else None)
        if eps is None:
            raise ConfigError(["--epsilon: required when pde.epsilon_list is empty"])
        coeffs = build_micro_coefficients(make_realization(cfg.field, p.seed), eps, grid, p.dv, p.gamma, p.alpha)
        traj = run(init, coeffs, dataclasses.replace(sc, epsilon=eps))
    else:
        ref = eff.reference_effective(cfg.field)
        D = args.D_star if args.D_star is not None else ref.D_star
        chi = args.chi_star if args.chi_star is not None else ref.chi_star
        traj = run_macro(D, chi, p.dv, p.gamma, p.alpha, init, sc, grid)
    snaps = Table(("t", "x_mid", "u", "v"))
    x = grid.x_mid
    for t, u, v in zip(traj.times, traj.u, traj.v):
        for xi, ui, vi in zip(x, u, v):
            snaps.add(float(t), float(xi), float(ui), float(vi))
    diag = Table(("t", "mass_u", "mass_v", "picard_iters"))
    for row in zip(traj.step_times, traj.mass_u, traj.mass_v, traj.picard_iters):
        diag.add(float(row[0]), float(row[1]), float(row[2]), int(row[3]))
    print(emit_csv(snaps, out / f"pde_{args.mode}_snapshots.csv"))
    print(emit_csv(diag, out / f"pde_{args.mode}_diagnostics.csv"))
    return EXIT_OK


def _finish(report, out: Path, stem: str) -> int:
    for name, table in report.tables.items():
        emit_csv(table, out / f"{name}.csv")
    print(emit_report(report, out / f"{stem}_report.json"))
    for line in summary_lines(report):
        print(line)
    return EXIT_OK if report.passed else EXIT_ASSERTION


def _cmd_experiment_eps(args, cfg, out: Path) -> int:
    return _finish(epsilon_sweep(cfg, threads=args.threads), out, "epsilon_sweep")


def _cmd_experiment_rho(args, cfg, out: Path) -> int:
    return _finish(rho_sweep_cmd(cfg, threads=args.threads), out, "rho_sweep")


_DISPATCH = {
    ("field", "sample"): _cmd_field_sample,
    ("cell", "solve"): _cmd_cell_solve,
    ("effective", "estimate"): _cmd_effective_estimate,
    ("effective", "rho-sweep"): _cmd_effective_sweep,
    ("pde", "run"): _cmd_pde_run,
    ("experiment", "epsilon-sweep"): _cmd_experiment_eps,
    ("experiment", "rho-sweep"): _cmd_experiment_rho,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _DISPATCH[(args.group, args.cmd)](args, cfg, _outdir(args, cfg))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
