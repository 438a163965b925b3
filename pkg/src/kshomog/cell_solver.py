"""Periodic cell problems on ``S_rho = [0, rho]`` and their effective coefficients.

The two correctors solve

    d/dz ( D (d eta_bar/dz + 1) ) = 0,      d/dz ( D d eta_hat/dz - chi ) = 0

with periodic boundary conditions and zero mean. Unknowns live at the
interfaces of the coefficient cells (node ``i`` is the left end of cell ``i``),
so the control volume around a node has its faces at cell midpoints, where D
is single-valued. For piecewise-constant data on the partition the discrete
fluxes are exactly constant and the effective coefficients are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .random_fields import FieldKind, FieldSpecError, RandomFieldRealization
from .tridiag import thomas_solve

__all__ = [
    "PeriodicCoefficientField",
    "CellSolution",
    "MisalignedPartitionError",
    "periodize",
    "solve_cell_problems",
    "effective_from_cell",
    "analytic_effective",
]


class MisalignedPartitionError(FieldSpecError):
    """The partition of ``[0, rho]`` does not align with checkerboard cells."""


@dataclass(frozen=True)
class PeriodicCoefficientField:
    """Piecewise-constant ``D`` and ``chi`` on the uniform partition of ``[0, rho]``,
    extended rho-periodically."""

    rho: float
    D_cells: np.ndarray
    chi_cells: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D_cells, dtype=float)
        chi = np.asarray(self.chi_cells, dtype=float)
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if D.ndim != 1 or D.size < 1 or D.shape != chi.shape:
            raise ValueError("D_cells and chi_cells must be equal-length 1-d arrays")
        if not np.all(D > 0) or not np.all(np.isfinite(D)):
            raise ValueError("D_cells must be positive and finite")
        if not np.all(chi >= 0) or not np.all(np.isfinite(chi)):
            raise ValueError("chi_cells must be non-negative and finite")
        object.__setattr__(self, "D_cells", D)
        object.__setattr__(self, "chi_cells", chi)

    @property
    def n_cells(self) -> int:
        return self.D_cells.size

    @property
    def h(self) -> float:
        return self.rho / self.n_cells


@dataclass(frozen=True)
class CellSolution:
    field: PeriodicCoefficientField
    eta_bar: np.ndarray  # n_cells + 1 nodal values, first == last
    eta_hat: np.ndarray
    flux_bar: float
    flux_hat: float
    face_flux_bar: np.ndarray  # per-cell D (eta_bar' + 1)
    face_flux_hat: np.ndarray  # per-cell D eta_hat' - chi

    @property
    def flux_residual(self) -> float:
        """Relative spread of the per-cell fluxes (zero for an exact solution)."""
        res = 0.0
        for f, src in (
            (self.face_flux_bar, self.field.D_cells),
            (self.face_flux_hat, self.field.chi_cells),
        ):
            scale = max(np.max(np.abs(f)), np.max(np.abs(src)), np.finfo(float).tiny)
            res = max(res, float(np.max(np.abs(f - f.mean())) / scale))
        return res


def _check_alignment(rho: float, n_cells: int, ell: float) -> None:
    cells_per_period = rho / ell
    m = round(cells_per_period)
    if m < 1 or abs(cells_per_period - m) > 1e-9 * max(1.0, cells_per_period):
        raise MisalignedPartitionError(
            f"rho={rho} is not an integer multiple of the cell length {ell}"
        )
    if n_cells % m:
        raise MisalignedPartitionError(
            f"n_cells={n_cells} is not a multiple of rho/cell_length={m}"
        )


def periodize(
    realization: RandomFieldRealization,
    rho: float,
    n_cells: int,
    *,
    allow_misaligned: bool = False,
) -> PeriodicCoefficientField:
    """Restrict a realization to ``[0, rho]`` sampled at cell midpoints.

    For checkerboard fields the partition must resolve the checkerboard
    exactly unless ``allow_misaligned`` is set, in which case midpoint
    sampling introduces an O(h) representation error.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if n_cells < 1:
        raise ValueError("n_cells must be at least 1")
    if realization.spec.kind is FieldKind.CHECKERBOARD and not allow_misaligned:
        _check_alignment(rho, n_cells, realization.spec.params.cell_length)
    z = (np.arange(n_cells) + 0.5) * (rho / n_cells)
    D, chi = realization.eval_many(z)
    return PeriodicCoefficientField(float(rho), D, chi)


def _solve_periodic(D: np.ndarray, src: np.ndarray, h: float) -> np.ndarray:
    """Zero-mean periodic nodal solution of ``(D (eta' ) + src)' = 0`` per cell.

    Node 0 is grounded, the remaining n-1 equations form a tridiagonal
    system, and the discrete mean is removed afterwards.
    """
    n = D.size
    eta = np.zeros(n + 1)
    if n == 1:
        return eta
    # node j (1..n-1) couples cells j-1 and j:
    # D[j-1] eta[j-1] - (D[j-1]+D[j]) eta[j] + D[j] eta[j+1] = -h (src[j] - src[j-1])
    # with eta[0] = eta[n] = 0 folded out; signs flipped for a positive diagonal.
    diag = D[:-1] + D[1:]
    off = -D[1:-1]
    rhs = h * (src[1:] - src[:-1])
    eta[1:n] = thomas_solve(off, diag, off, rhs)
    eta[:n] -= eta[:n].mean()
    eta[n] = eta[0]
    return eta


def solve_cell_problems(field: PeriodicCoefficientField) -> CellSolution:
    D, chi, h = field.D_cells, field.chi_cells, field.h
    eta_bar = _solve_periodic(D, D, h)
    eta_hat = _solve_periodic(D, -chi, h)
    f_bar = D * (np.diff(eta_bar) / h + 1.0)
    f_hat = D * np.diff(eta_hat) / h - chi
    return CellSolution(
        field, eta_bar, eta_hat, float(f_bar.mean()), float(f_hat.mean()), f_bar, f_hat
    )


def effective_from_cell(sol: CellSolution) -> tuple[float, float]:
    """``(D_rho, chi_rho)`` as cell-wise exact averages of the corrector fluxes."""
    w = np.full(sol.field.n_cells, 1.0 / sol.field.n_cells)
    D_rho = math.fsum(w * sol.face_flux_bar)
    chi_rho = -math.fsum(w * sol.face_flux_hat)
    return D_rho, chi_rho


def analytic_effective(field: PeriodicCoefficientField) -> tuple[float, float]:
    """Closed form: harmonic mean of D and the 1/D-weighted mean of chi."""
    inv = 1.0 / field.D_cells
    s = math.fsum(inv)
    D_rho = field.n_cells / s
    chi_rho = math.fsum(field.chi_cells * inv) / s
    return D_rho, chi_rho
