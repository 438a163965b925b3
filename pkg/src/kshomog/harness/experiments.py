"""Experiment drivers: the rho-sweep and the epsilon-sweep."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import effective as eff
from ..ks_solver import (
    Grid,
    SolverConfig,
    SolverError,
    State,
    Trajectory,
    build_micro_coefficients,
    run,
    run_macro,
    space_time_l2_error,
)
from ..random_fields import make_realization
from .config import ExperimentConfig, config_echo
from .output import Report, Table

__all__ = [
    "RHO_SWEEP_COLUMNS",
    "SweepMemberError",
    "rho_sweep_cmd",
    "epsilon_sweep",
    "solver_setup",
    "mass_drift",
    "K_SE",
    "MASS_TOL",
    "POSITIVITY_TOL",
]

RHO_SWEEP_COLUMNS = (
    "rho", "n_realizations", "mean_D", "se_D", "mean_chi", "se_chi", "D_star_ref", "chi_star_ref",
)
K_SE = 5.0
MASS_TOL = 1e-12
POSITIVITY_TOL = 1e-14
CONST_CHI_TOL = 1e-10
MICRO_MACRO_TOL = 1e-10


class SweepMemberError(RuntimeError):
    """A failed micro run, annotated with its epsilon and seed."""

    def __init__(self, epsilon: float, seed: int, cause: Exception):
        super().__init__(f"epsilon={epsilon!r}, seed={seed}: {cause}")
        self.epsilon = epsilon
        self.seed = seed


def _within(bias: float, se: float, k: float = K_SE) -> bool:
    # se == 0 happens for deterministic estimators (constant fields, constant
    # chi); then only an exact hit passes
    return abs(bias) <= k * se


def mass_drift(traj: Trajectory) -> float:
    m0 = traj.mass_u[0]
    return float(np.max(np.abs(traj.mass_u - m0)) / abs(m0)) if m0 != 0 else float(np.max(np.abs(traj.mass_u)))


# -- rho sweep -------------------------------------------------------------------
def rho_sweep_cmd(cfg: ExperimentConfig, *, threads: int = 1) -> Report:
    t0 = time.perf_counter()
    spec, cell = cfg.field, cfg.cell
    report = Report(cfg.experiment_id, config_echo(cfg))
    ref = eff.reference_effective(spec)
    rows = eff.rho_sweep(
        spec, cell.rho_list, cell.n_cells_per_unit, cell.n_realizations, cell.base_seed,
        threads=threads, allow_misaligned=cell.allow_misaligned,
    )
    summary = Table(RHO_SWEEP_COLUMNS)
    samples = Table(("rho", "seed", "D_rho", "chi_rho"))
    for e in rows:
        summary.add(e.rho, e.n_realizations, e.mean_D, e.se_D, e.mean_chi, e.se_chi, ref.D_star, ref.chi_star)
        for s, d, c in zip(e.seeds, e.D_samples, e.chi_samples):
            samples.add(e.rho, int(s), float(d), float(c))
    report.tables["rho_sweep"] = summary
    report.tables["rho_sweep_samples"] = samples

    D_all = np.concatenate([e.D_samples for e in rows])
    chi_all = np.concatenate([e.chi_samples for e in rows])
    report.check(
        "samples_within_bounds",
        bool(np.all((D_all >= spec.d_low) & (D_all <= spec.d_high)
                    & (chi_all >= spec.chi_low) & (chi_all <= spec.chi_high))),
        f"D in [{D_all.min():.6g}, {D_all.max():.6g}], chi in [{chi_all.min():.6g}, {chi_all.max():.6g}]",
    )
    if spec.chi_low == spec.chi_high:
        dev = float(np.max(np.abs(chi_all - spec.chi_low)))
        report.check("constant_chi_identity", dev <= CONST_CHI_TOL, f"max |chi_rho - c| = {dev:.3e}")
    last = rows[-1]
    ref_note = "" if ref.exact else " (reference is a Monte-Carlo surrogate)"
    bias_D, bias_chi = last.mean_D - ref.D_star, last.mean_chi - ref.chi_star
    report.check(
        "final_row_D_within_5se", _within(bias_D, last.se_D),
        f"|mean_D - D*| = {abs(bias_D):.3e}, 5 se = {K_SE * last.se_D:.3e}{ref_note}",
    )
    report.check(
        "final_row_chi_within_5se", _within(bias_chi, last.se_chi),
        f"|mean_chi - chi*| = {abs(bias_chi):.3e}, 5 se = {K_SE * last.se_chi:.3e}{ref_note}",
    )
    if spec.is_constant:
        zero = all(e.n_realizations < 2 or (e.se_D == 0 and e.se_chi == 0) for e in rows)
        report.check("zero_variance_rows", zero, "constant field")
    elif len(rows) >= 2:
        sd0, sd1 = rows[0].sd_D, rows[-1].sd_D
        ratio = sd0 / sd1 if sd1 > 0 else math.inf
        report.check(
            "dispersion_shrinks", ratio >= cell.sd_shrink_factor,
            f"sd(D_rho) rho={rows[0].rho:g}: {sd0:.4g}, rho={rows[-1].rho:g}: {sd1:.4g}, "
            f"ratio {ratio:.3g} (need >= {cell.sd_shrink_factor:g})",
        )
    report.timings["rho_sweep_s"] = time.perf_counter() - t0
    return report


# -- epsilon sweep ---------------------------------------------------------------
def solver_setup(cfg: ExperimentConfig) -> tuple[Grid, SolverConfig, State]:
    p = cfg.pde
    grid = Grid(p.a, p.b, p.n)
    sc = SolverConfig(
        dt=p.dt, t_end=p.tau, picard_tol=p.picard_tol, picard_max=p.picard_max,
        snapshot_stride=cfg.output.snapshot_stride,
    )
    init = State(0.0, p.u0.cell_averages(grid), p.v0.cell_averages(grid))
    return grid, sc, init


def _micro_seed(cfg: ExperimentConfig, j: int, k: int) -> int:
    p = cfg.pde
    return p.seed + k if p.shared_seed else p.seed + j * p.n_realizations + k


def epsilon_sweep(cfg: ExperimentConfig, *, threads: int = 1) -> Report:
    """Micro runs at each epsilon against one macro run with estimated (D*, chi*).

    With ``pde.n_realizations = M > 1`` each epsilon is run for M realizations
    and the summary error is the root-mean-square over them.
    """
    if not cfg.pde.epsilon_list:
        raise ValueError("pde.epsilon_list is empty")
    p, spec, cell = cfg.pde, cfg.field, cfg.cell
    report = Report(cfg.experiment_id, config_echo(cfg))
    t0 = time.perf_counter()

    rho = cell.rho_list[-1]
    est = eff.estimate(
        spec, rho, eff.n_cells_for(rho, cell.n_cells_per_unit), cell.n_realizations,
        cell.base_seed, threads=threads, allow_misaligned=cell.allow_misaligned,
    )
    ref = eff.reference_effective(spec)
    t_table = Table(("rho", "n_realizations", "mean_D", "se_D", "mean_chi", "se_chi", "D_star_ref", "chi_star_ref"))
    t_table.add(est.rho, est.n_realizations, est.mean_D, est.se_D, est.mean_chi, est.se_chi, ref.D_star, ref.chi_star)
    report.tables["effective"] = t_table
    report.timings["estimate_s"] = time.perf_counter() - t0

    grid, sc, init = solver_setup(cfg)
    t1 = time.perf_counter()
    macro = run_macro(est.mean_D, est.mean_chi, p.dv, p.gamma, p.alpha, init, sc, grid)
    report.timings["macro_s"] = time.perf_counter() - t1

    jobs = [(j, eps, k) for j, eps in enumerate(p.epsilon_list) for k in range(p.n_realizations)]

    def task(job):
        j, eps, k = job
        seed = _micro_seed(cfg, j, k)
        real = make_realization(spec, seed)
        try:
            coeffs = build_micro_coefficients(real, eps, grid, p.dv, p.gamma, p.alpha)
            traj = run(init, coeffs, sc)
        except (ValueError, SolverError) as exc:
            raise SweepMemberError(eps, seed, exc) from exc
        eu, ev = space_time_l2_error(traj, macro)
        return seed, eu, ev, mass_drift(traj), float(traj.u.min()), int(traj.picard_iters.max())

    t2 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, jobs))
    else:
        results = [task(job) for job in jobs]
    report.timings["micro_s"] = time.perf_counter() - t2

    runs = Table(("epsilon", "seed", "err_u", "err_v", "mass_drift", "min_u", "max_picard_iters"))
    for (j, eps, k), res in zip(jobs, results):
        runs.add(eps, *res)
    summary = Table(("epsilon", "n_realizations", "err_u", "err_v"))
    err_u = []
    for j, eps in enumerate(p.epsilon_list):
        mine = [res for (jj, _, _), res in zip(jobs, results) if jj == j]
        eu = math.sqrt(math.fsum(r[1] ** 2 for r in mine) / len(mine))
        ev = math.sqrt(math.fsum(r[2] ** 2 for r in mine) / len(mine))
        summary.add(eps, len(mine), eu, ev)
        err_u.append(eu)
    report.tables["epsilon_runs"] = runs
    report.tables["epsilon_sweep"] = summary

    drifts = [r[3] for r in results] + [mass_drift(macro)]
    report.check(
        "mass_conservation", max(drifts) <= MASS_TOL,
        f"max relative drift of sum(u) h = {max(drifts):.3e} over {sc.n_steps} steps",
    )
    min_u = min([r[4] for r in results] + [float(macro.u.min())])
    report.check("nonnegative_u", min_u >= -POSITIVITY_TOL, f"min u = {min_u:.3e}")
    if spec.is_constant:
        worst = max(max(r[1], r[2]) for r in results)
        report.check("micro_equals_macro", worst < MICRO_MACRO_TOL, f"max error {worst:.3e}")
    else:
        report.check(
            "err_u_strictly_decreasing", all(b < a for a, b in zip(err_u, err_u[1:])),
            "err_u = " + ", ".join(f"{e:.4g}" for e in err_u),
        )
        report.check(
            "err_u_last_below_first", err_u[-1] < p.error_reduction * err_u[0],
            f"err_u(last) = {err_u[-1]:.4g}, {p.error_reduction:g} * err_u(first) = "
            f"{p.error_reduction * err_u[0]:.4g}",
        )
    report.timings["total_s"] = time.perf_counter() - t0
    return report
