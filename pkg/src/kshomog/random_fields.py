"""Stationary random coefficient fields ``(D(y), chi(y))`` on the real line.

Three families are provided:

* ``checkerboard`` -- i.i.d. values on cells ``[k*l, (k+1)*l)``,
* ``random_phase`` -- a fixed periodic profile shifted by a uniform random phase,
* ``moving_average`` -- a window average of uniform checkerboard noise,
  clamped to the ellipticity bounds.

Every draw is a pure function of ``(seed, stream, cell index)``: cell values
come from a counter-based Philox stream keyed by the seed, so realizations can
be evaluated lazily, in any order and from any thread.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "FieldKind",
    "FieldSpec",
    "FieldSpecError",
    "CheckerboardParams",
    "RandomPhaseParams",
    "MovingAverageParams",
    "RandomFieldRealization",
    "make_realization",
    "sample_path",
    "ensemble_inverse_mean_D",
    "ensemble_expectation",
]

_SEED_MAX = 2**64
# Offset so that negative cell indices map to non-negative stream positions.
_INDEX_OFFSET = 2**62
_PROB_TOL = 1e-12

# Stream identifiers (second Philox key word).
_STREAM_D = 0
_STREAM_CHI = 1
_STREAM_PHASE = 2


class FieldSpecError(ValueError):
    """Raised for an invalid field specification."""


class FieldKind(str, enum.Enum):
    CHECKERBOARD = "checkerboard"
    RANDOM_PHASE = "random_phase"
    MOVING_AVERAGE = "moving_average"


@dataclass(frozen=True)
class CheckerboardParams:
    """I.i.d. cell values.

    ``chi_coupling="paired"`` ties chi to the D level (``chi_levels[i]`` goes
    with ``d_levels[i]``); ``"independent"`` draws chi from its own stream.
    """

    cell_length: float
    d_levels: tuple[float, ...]
    d_probs: tuple[float, ...]
    chi_levels: tuple[float, ...]
    chi_probs: tuple[float, ...] = ()
    chi_coupling: str = "independent"


@dataclass(frozen=True)
class RandomPhaseParams:
    """Piecewise-constant profile on ``[0, period)``.

    ``breakpoints`` are the left ends of the pieces, starting at 0.
    """

    period: float
    breakpoints: tuple[float, ...]
    d_values: tuple[float, ...]
    chi_values: tuple[float, ...]


@dataclass(frozen=True)
class MovingAverageParams:
    """Window average of uniform ``[-1, 1]`` checkerboard noise.

    ``D(y) = clip(d_center + d_amplitude * z(y), d_low, d_high)`` where ``z`` is
    the average of the noise over ``[y - w/2, y + w/2]``; chi likewise, from an
    independent noise stream.
    """

    cell_length: float
    kernel_width: float
    d_center: float
    d_amplitude: float
    chi_center: float
    chi_amplitude: float = 0.0


@dataclass(frozen=True)
class FieldSpec:
    kind: FieldKind
    d_low: float
    d_high: float
    chi_low: float
    chi_high: float
    params: CheckerboardParams | RandomPhaseParams | MovingAverageParams

    def __post_init__(self):
        object.__setattr__(self, "kind", FieldKind(self.kind))
        errors = self.validation_errors()
        if errors:
            raise FieldSpecError("; ".join(errors))

    # -- constructors -----------------------------------------------------
    @classmethod
    def checkerboard(
        cls,
        d_levels: Sequence[float],
        d_probs: Sequence[float] | None = None,
        chi_levels: Sequence[float] = (0.0,),
        chi_probs: Sequence[float] | None = None,
        *,
        cell_length: float = 1.0,
        chi_coupling: str = "independent",
        d_low: float | None = None,
        d_high: float | None = None,
        chi_low: float | None = None,
        chi_high: float | None = None,
    ) -> "FieldSpec":
        d_levels = tuple(float(d) for d in d_levels)
        chi_levels = tuple(float(c) for c in chi_levels)
        if d_probs is None:
            d_probs = [1.0 / len(d_levels)] * len(d_levels)
        if chi_coupling == "independent" and chi_probs is None:
            chi_probs = [1.0 / len(chi_levels)] * len(chi_levels)
        params = CheckerboardParams(
            cell_length=float(cell_length),
            d_levels=d_levels,
            d_probs=tuple(float(p) for p in d_probs),
            chi_levels=chi_levels,
            chi_probs=tuple(float(p) for p in (() if chi_probs is None else chi_probs)),
            chi_coupling=chi_coupling,
        )
        return cls(
            FieldKind.CHECKERBOARD,
            min(d_levels) if d_low is None else d_low,
            max(d_levels) if d_high is None else d_high,
            min(chi_levels) if chi_low is None else chi_low,
            max(chi_levels) if chi_high is None else chi_high,
            params,
        )

    @classmethod
    def constant(cls, D: float, chi: float = 0.0) -> "FieldSpec":
        return cls.checkerboard([D], [1.0], [chi], [1.0])

    @classmethod
    def random_phase(
        cls,
        breakpoints: Sequence[float],
        d_values: Sequence[float],
        chi_values: Sequence[float] | None = None,
        *,
        period: float = 1.0,
        d_low: float | None = None,
        d_high: float | None = None,
        chi_low: float | None = None,
        chi_high: float | None = None,
    ) -> "FieldSpec":
        d_values = tuple(float(d) for d in d_values)
        if chi_values is None:
            chi_values = [0.0] * len(d_values)
        chi_values = tuple(float(c) for c in chi_values)
        params = RandomPhaseParams(
            float(period), tuple(float(b) for b in breakpoints), d_values, chi_values
        )
        return cls(
            FieldKind.RANDOM_PHASE,
            min(d_values) if d_low is None else d_low,
            max(d_values) if d_high is None else d_high,
            min(chi_values) if chi_low is None else chi_low,
            max(chi_values) if chi_high is None else chi_high,
            params,
        )

    @classmethod
    def moving_average(
        cls,
        *,
        d_low: float,
        d_high: float,
        d_center: float,
        d_amplitude: float,
        chi_center: float = 0.0,
        chi_amplitude: float = 0.0,
        chi_low: float | None = None,
        chi_high: float | None = None,
        cell_length: float = 1.0,
        kernel_width: float = 4.0,
    ) -> "FieldSpec":
        params = MovingAverageParams(
            float(cell_length),
            float(kernel_width),
            float(d_center),
            float(d_amplitude),
            float(chi_center),
            float(chi_amplitude),
        )
        return cls(
            FieldKind.MOVING_AVERAGE,
            d_low,
            d_high,
            max(0.0, chi_center - abs(chi_amplitude)) if chi_low is None else chi_low,
            chi_center + abs(chi_amplitude) if chi_high is None else chi_high,
            params,
        )

    # -- validation -------------------------------------------------------
    def validation_errors(self) -> list[str]:
        errors = []
        if not (0.0 < self.d_low <= self.d_high < math.inf):
            errors.append(
                f"diffusion bounds must satisfy 0 < d_low <= d_high, got "
                f"[{self.d_low}, {self.d_high}]"
            )
        if not (0.0 <= self.chi_low <= self.chi_high < math.inf):
            errors.append(
                f"chemosensitivity bounds must satisfy 0 <= chi_low <= chi_high, got "
                f"[{self.chi_low}, {self.chi_high}]"
            )
        p = self.params
        if self.kind is FieldKind.CHECKERBOARD:
            if not isinstance(p, CheckerboardParams):
                return errors + ["checkerboard kind requires CheckerboardParams"]
            if not p.cell_length > 0:
                errors.append("cell_length must be positive")
            errors += _check_distribution("d", p.d_levels, p.d_probs)
            errors += _check_within("d_levels", p.d_levels, self.d_low, self.d_high)
            errors += _check_within("chi_levels", p.chi_levels, self.chi_low, self.chi_high)
            if p.chi_coupling == "independent":
                errors += _check_distribution("chi", p.chi_levels, p.chi_probs)
            elif p.chi_coupling == "paired":
                if len(p.chi_levels) != len(p.d_levels):
                    errors.append("paired chi_levels must match d_levels in length")
            else:
                errors.append(f"unknown chi_coupling {p.chi_coupling!r}")
        elif self.kind is FieldKind.RANDOM_PHASE:
            if not isinstance(p, RandomPhaseParams):
                return errors + ["random_phase kind requires RandomPhaseParams"]
            if not p.period > 0:
                errors.append("period must be positive")
            b = np.asarray(p.breakpoints, dtype=float)
            if len(b) == 0 or b[0] != 0.0 or np.any(np.diff(b) <= 0) or b[-1] >= p.period:
                errors.append("breakpoints must start at 0, increase strictly and stay below period")
            if not (len(p.d_values) == len(p.chi_values) == len(b)):
                errors.append("profile tables must have one value per breakpoint")
            errors += _check_within("d_values", p.d_values, self.d_low, self.d_high)
            errors += _check_within("chi_values", p.chi_values, self.chi_low, self.chi_high)
        elif self.kind is FieldKind.MOVING_AVERAGE:
            if not isinstance(p, MovingAverageParams):
                return errors + ["moving_average kind requires MovingAverageParams"]
            if not p.cell_length > 0:
                errors.append("cell_length must be positive")
            if not p.kernel_width >= p.cell_length:
                errors.append("kernel_width must be at least cell_length")
        return errors

    @property
    def is_constant(self) -> bool:
        return self.d_low == self.d_high and self.chi_low == self.chi_high


def _check_distribution(name, levels, probs) -> list[str]:
    errors = []
    if len(levels) == 0:
        errors.append(f"{name}_levels must be non-empty")
    if len(probs) != len(levels):
        errors.append(f"{name}_probs must have one entry per level")
    elif any(q < 0 for q in probs) or abs(math.fsum(probs) - 1.0) > _PROB_TOL:
        errors.append(f"{name}_probs must be non-negative and sum to 1")
    return errors


def _check_within(name, values, lo, hi) -> list[str]:
    if any(not (lo <= v <= hi) for v in values):
        return [f"{name} must lie in [{lo}, {hi}]"]
    return []


# -- counter-based uniforms --------------------------------------------------
def _uniforms(seed: int, stream: int, first: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for cell indices ``first, ..., first + count - 1``."""
    pos = first + _INDEX_OFFSET
    block, lane = divmod(pos, 4)
    bitgen = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64), counter=block)
    raw = bitgen.random_raw(lane + count)[lane:]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _uniforms_at(seed: int, stream: int, idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return np.empty(idx.shape)
    lo, hi = int(idx.min()), int(idx.max())
    block = _uniforms(seed, stream, lo, hi - lo + 1)
    return block[idx - lo]


@dataclass
class RandomFieldRealization:
    """One draw ``omega`` of a stationary field; evaluation is deterministic."""

    spec: FieldSpec
    seed: int
    phase: float = field(init=False, default=0.0)
    _cache: dict = field(init=False, default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.spec.kind is FieldKind.RANDOM_PHASE:
            self.phase = float(_uniforms(self.seed, _STREAM_PHASE, 0, 1)[0]) * self.spec.params.period

    # Scalar evaluation goes through a per-cell memo; the array path below is
    # the same arithmetic, vectorised.
    def eval(self, y: float) -> tuple[float, float]:
        y = float(y)
        if not math.isfinite(y):
            raise ValueError(f"cannot evaluate field at non-finite y={y}")
        if self.spec.kind is FieldKind.CHECKERBOARD:
            k = math.floor(y / self.spec.params.cell_length)
            if k not in self._cache:
                d, c = self.cell_values(np.array([k]))
                self._cache[k] = (float(d[0]), float(c[0]))
            return self._cache[k]
        d, c = self.eval_many(np.array([y]))
        return float(d[0]), float(c[0])

    def eval_many(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("cannot evaluate field at non-finite coordinates")
        spec, p = self.spec, self.spec.params
        if spec.kind is FieldKind.CHECKERBOARD:
            return self.cell_values(np.floor(y / p.cell_length).astype(np.int64))
        if spec.kind is FieldKind.RANDOM_PHASE:
            z = np.mod(y + self.phase, p.period)
            j = np.searchsorted(np.asarray(p.breakpoints), z, side="right") - 1
            return np.asarray(p.d_values)[j], np.asarray(p.chi_values)[j]
        return self._moving_average(y)

    def cell_values(self, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Checkerboard ``(D, chi)`` on integer cells ``k``."""
        p = self.spec.params
        u = _uniforms_at(self.seed, _STREAM_D, k)
        i = _pick(p.d_probs, u)
        D = np.asarray(p.d_levels)[i]
        if p.chi_coupling == "paired":
            chi = np.asarray(p.chi_levels)[i]
        else:
            chi = np.asarray(p.chi_levels)[_pick(p.chi_probs, _uniforms_at(self.seed, _STREAM_CHI, k))]
        return D, chi

    def _moving_average(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec, p = self.spec, self.spec.params
        zd = _window_average(y, p, lambda k: 2.0 * _uniforms_at(self.seed, _STREAM_D, k) - 1.0)
        D = np.clip(p.d_center + p.d_amplitude * zd, spec.d_low, spec.d_high)
        if p.chi_amplitude == 0.0:
            chi = np.full_like(D, p.chi_center)
        else:
            zc = _window_average(y, p, lambda k: 2.0 * _uniforms_at(self.seed, _STREAM_CHI, k) - 1.0)
            chi = p.chi_center + p.chi_amplitude * zc
        return D, np.clip(chi, spec.chi_low, spec.chi_high)


def _pick(probs, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    # right-closed search; clip guards the cdf[-1] = 1 - tiny case
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


def _window_average(y: np.ndarray, p: MovingAverageParams, noise: Callable) -> np.ndarray:
    """Exact average of piecewise-constant cell noise over ``[y - w/2, y + w/2]``.

    Each point sums its own overlapping cells, so the result does not depend
    on which other points are evaluated alongside it.
    """
    ell, w = p.cell_length, p.kernel_width
    lo, hi = (y - 0.5 * w) / ell, (y + 0.5 * w) / ell
    m = int(math.ceil(w / ell)) + 1
    j = np.floor(lo).astype(np.int64)[:, None] + np.arange(m)
    overlap = np.clip(np.minimum(hi[:, None], j + 1) - np.maximum(lo[:, None], j), 0.0, None)
    xi = noise(j.ravel()).reshape(j.shape)
    return np.sum(xi * overlap, axis=1) * ell / w


def make_realization(spec: FieldSpec, seed: int) -> RandomFieldRealization:
    """Seeded realization of ``spec``. ``seed`` must fit in 64 unsigned bits."""
    errors = spec.validation_errors()
    if errors:
        raise FieldSpecError("; ".join(errors))
    seed = int(seed)
    if not 0 <= seed < _SEED_MAX:
        raise FieldSpecError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return RandomFieldRealization(spec, seed)


def sample_path(realization: RandomFieldRealization, a: float, b: float, n: int):
    """Per-cell midpoint values on the uniform partition of ``[a, b]`` into ``n`` cells.

    Returns ``(y_mid, D, chi)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not a < b:
        raise ValueError("need a < b")
    h = (b - a) / n
    y_mid = a + (np.arange(n) + 0.5) * h
    D, chi = realization.eval_many(y_mid)
    return y_mid, D, chi


def ensemble_expectation(
    spec: FieldSpec,
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    *,
    n_samples: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """``E[g(D, chi)]`` under the one-point law of the field, with its error.

    Exact (error 0) for checkerboard and random-phase fields. For moving
    averages the one-point law is not tabulated; it is estimated by Monte Carlo
    from ``n_samples`` independent (position, realization) pairs, and the
    returned error is the standard error of that estimate.
    """
    p = spec.params
    if spec.kind is FieldKind.CHECKERBOARD:
        D = np.asarray(p.d_levels)
        pd = np.asarray(p.d_probs)
        if p.chi_coupling == "paired":
            return float(np.sum(pd * g(D, np.asarray(p.chi_levels)))), 0.0
        C = np.asarray(p.chi_levels)
        pc = np.asarray(p.chi_probs)
        vals = g(D[:, None], C[None, :])
        return float(np.sum(pd[:, None] * pc[None, :] * vals)), 0.0
    if spec.kind is FieldKind.RANDOM_PHASE:
        b = np.append(p.breakpoints, p.period)
        widths = np.diff(b) / p.period
        vals = g(np.asarray(p.d_values), np.asarray(p.chi_values))
        return float(np.sum(widths * vals)), 0.0
    # moving average: draw fresh noise per sample; position within a cell is
    # uniform because the field is only cell-shift stationary
    rng = np.random.default_rng(seed)
    n_noise = int(math.ceil(p.kernel_width / p.cell_length)) + 2
    y = rng.uniform(0.0, p.cell_length, n_samples) + 0.5 * p.kernel_width
    xi_d = rng.uniform(-1.0, 1.0, (n_samples, n_noise))
    xi_c = rng.uniform(-1.0, 1.0, (n_samples, n_noise))
    zd = _rowwise_window(y, p, xi_d)
    D = np.clip(p.d_center + p.d_amplitude * zd, spec.d_low, spec.d_high)
    chi = p.chi_center + p.chi_amplitude * _rowwise_window(y, p, xi_c)
    chi = np.clip(chi, spec.chi_low, spec.chi_high)
    vals = g(D, chi)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def _rowwise_window(y: np.ndarray, p: MovingAverageParams, xi: np.ndarray) -> np.ndarray:
    """Window average where row ``i`` of ``xi`` holds the noise of cells 0, 1, ..."""
    ell, w = p.cell_length, p.kernel_width
    lo, hi = (y - 0.5 * w) / ell, (y + 0.5 * w) / ell
    j = np.arange(xi.shape[1])[None, :]
    overlap = np.clip(np.minimum(hi[:, None], j + 1) - np.maximum(lo[:, None], j), 0.0, None)
    return np.sum(xi * overlap, axis=1) * ell / w


def ensemble_inverse_mean_D(spec: FieldSpec) -> float:
    """``E[1/D]`` of the one-point law; exact except for moving averages."""
    return ensemble_expectation(spec, lambda D, chi: 1.0 / D)[0]
