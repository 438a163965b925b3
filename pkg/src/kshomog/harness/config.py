"""Experiment configuration files.

The format is sectioned ``key = value`` text read with :mod:`configparser`
(see ``docs/config.md`` for the grammar). Every problem found is collected and
reported together, each prefixed with its ``section.key`` path.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..ks_solver import DvProfile, InitialProfile
from ..random_fields import FieldSpec, FieldSpecError

__all__ = [
    "ConfigError",
    "CellBlock",
    "PdeBlock",
    "OutputBlock",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "parse_call",
]

_MISSING = object()


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class CellBlock:
    rho_list: tuple[float, ...] = (8.0, 32.0, 128.0, 512.0)
    n_cells_per_unit: int = 1
    n_realizations: int = 64
    base_seed: int = 0
    allow_misaligned: bool = False
    sd_shrink_factor: float = 4.0


@dataclass(frozen=True)
class PdeBlock:
    a: float = 0.0
    b: float = 1.0
    n: int = 256
    dt: float = 1e-3
    tau: float = 0.5
    gamma: float = 1.0
    alpha: float = 1.0
    dv: DvProfile = DvProfile("constant", 1.0, 0.0)
    u0: InitialProfile = InitialProfile.raised_cosine(1.0, 1.0)
    v0: InitialProfile = InitialProfile.constant(0.0)
    epsilon_list: tuple[float, ...] = ()
    seed: int = 0
    shared_seed: bool = True
    n_realizations: int = 1
    error_reduction: float = 1.0
    picard_tol: float = 1e-8
    picard_max: int = 50


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    snapshot_stride: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    field: FieldSpec
    cell: CellBlock = CellBlock()
    pde: PdeBlock = PdeBlock()
    output: OutputBlock = OutputBlock()
    source: str = field(default="", compare=False)


# -- value parsing -------------------------------------------------------------
def _float(s: str) -> float:
    s = s.strip()
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def _int(s: str) -> int:
    f = _float(s)
    if not float(f).is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _float_list(s: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    return tuple(_float(p) for p in parts)


_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def parse_call(s: str) -> tuple[str, list[float], dict[str, float]]:
    """Parse ``name(1, 2, key=3)`` into ``("name", [1, 2], {"key": 3})``."""
    m = _CALL.match(s)
    if not m:
        raise ValueError(f"expected name(args...), got {s!r}")
    name, body = m.group(1), m.group(2) or ""
    args, kwargs = [], {}
    for part in (p.strip() for p in body.split(",")):
        if not part:
            continue
        if "=" in part:
            k, v = part.split("=", 1)
            kwargs[k.strip()] = _float(v)
        else:
            if kwargs:
                raise ValueError(f"positional argument after keyword in {s!r}")
            args.append(_float(part))
    return name, args, kwargs


def _initial_profile(s: str) -> InitialProfile:
    name, args, kwargs = parse_call(s)
    makers: dict[str, Callable[..., InitialProfile]] = {
        "constant": InitialProfile.constant,
        "raised_cosine": InitialProfile.raised_cosine,
        "gaussian": InitialProfile.gaussian,
    }
    if name not in makers:
        raise ValueError(f"unknown preset {name!r} (choose from {', '.join(makers)})")
    if name == "raised_cosine":
        if len(args) > 2:
            args[2] = _int(str(args[2]))
        if "mode" in kwargs:
            kwargs["mode"] = _int(str(kwargs["mode"]))
    try:
        prof = makers[name](*args, **kwargs)
    except TypeError as exc:
        raise ValueError(f"bad arguments for {name}: {exc}") from None
    return prof


def _dv_profile(s: str) -> DvProfile:
    name, args, kwargs = parse_call(s)
    if name not in ("constant", "smooth"):
        raise ValueError(f"unknown D_v profile {name!r} (choose constant or smooth)")
    try:
        return DvProfile(name, *args, **kwargs)
    except TypeError as exc:
        raise ValueError(f"bad arguments for {name}: {exc}") from None


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.errors: list[str] = []
        self.used: set[tuple[str, str]] = set()

    def get(self, section: str, key: str, conv: Callable[[str], Any], default: Any = _MISSING):
        self.used.add((section, key))
        if not self.cp.has_option(section, key):
            if default is _MISSING:
                self.errors.append(f"{section}.{key}: missing required key")
                return None
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            self.errors.append(f"{section}.{key}: {exc}")
            return None

    def check(self, ok: bool, path: str, message: str) -> None:
        if not ok:
            self.errors.append(f"{path} {message}")


def _parse_field(r: _Reader) -> FieldSpec | None:
    if not r.cp.has_section("field"):
        r.errors.append("field: missing section")
        return None
    kind = r.get("field", "kind", str)
    opt = lambda key, conv=_float: r.get("field", key, conv, None)  # noqa: E731
    bounds = dict(d_low=opt("d_low"), d_high=opt("d_high"), chi_low=opt("chi_low"), chi_high=opt("chi_high"))
    try:
        if kind == "constant":
            D, chi = r.get("field", "D", _float), r.get("field", "chi", _float, 0.0)
            if D is None or chi is None:
                return None
            return FieldSpec.constant(D, chi)
        if kind == "checkerboard":
            d_levels = r.get("field", "d_levels", _float_list)
            d_probs = opt("d_probs", _float_list)
            chi_levels = r.get("field", "chi_levels", _float_list, (0.0,))
            chi_probs = opt("chi_probs", _float_list)
            coupling = r.get("field", "chi_coupling", str, "independent")
            ell = r.get("field", "cell_length", _float, 1.0)
            if None in (d_levels, chi_levels, coupling, ell):
                return None
            return FieldSpec.checkerboard(
                d_levels, d_probs, chi_levels, chi_probs,
                cell_length=ell, chi_coupling=coupling.strip(), **bounds,
            )
        if kind == "random_phase":
            period = r.get("field", "period", _float, 1.0)
            bps = r.get("field", "breakpoints", _float_list)
            dv = r.get("field", "d_values", _float_list)
            cv = opt("chi_values", _float_list)
            if None in (period, bps, dv):
                return None
            return FieldSpec.random_phase(bps, dv, cv, period=period, **bounds)
        if kind == "moving_average":
            vals = dict(
                cell_length=r.get("field", "cell_length", _float, 1.0),
                kernel_width=r.get("field", "kernel_width", _float, 4.0),
                d_center=r.get("field", "d_center", _float),
                d_amplitude=r.get("field", "d_amplitude", _float),
                chi_center=r.get("field", "chi_center", _float, 0.0),
                chi_amplitude=r.get("field", "chi_amplitude", _float, 0.0),
                d_low=r.get("field", "d_low", _float),
                d_high=r.get("field", "d_high", _float),
                chi_low=bounds["chi_low"],
                chi_high=bounds["chi_high"],
            )
            if any(v is None for k, v in vals.items() if k not in ("chi_low", "chi_high")):
                return None
            return FieldSpec.moving_average(**vals)
        if kind is not None:
            r.errors.append(
                f"field.kind: unknown kind {kind!r} "
                "(choose constant, checkerboard, random_phase or moving_average)"
            )
    except FieldSpecError as exc:
        r.errors.append(f"field: {exc}")
    return None


def _parse_cell(r: _Reader) -> CellBlock:
    d = CellBlock()
    blk = CellBlock(
        rho_list=r.get("cell", "rho_list", _float_list, d.rho_list),
        n_cells_per_unit=r.get("cell", "n_cells_per_unit", _int, d.n_cells_per_unit),
        n_realizations=r.get("cell", "n_realizations", _int, d.n_realizations),
        base_seed=r.get("cell", "base_seed", _int, d.base_seed),
        allow_misaligned=r.get("cell", "allow_misaligned", _bool, d.allow_misaligned),
        sd_shrink_factor=r.get("cell", "sd_shrink_factor", _float, d.sd_shrink_factor),
    )
    if blk.rho_list is not None:
        r.check(len(blk.rho_list) > 0, "cell.rho_list", "must not be empty")
        r.check(all(x > 0 for x in blk.rho_list), "cell.rho_list", "entries must be positive")
        r.check(
            all(b > a for a, b in zip(blk.rho_list, blk.rho_list[1:])),
            "cell.rho_list", "must be strictly increasing",
        )
    if blk.n_cells_per_unit is not None:
        r.check(blk.n_cells_per_unit >= 1, "cell.n_cells_per_unit", "must be at least 1")
    if blk.n_realizations is not None:
        r.check(blk.n_realizations >= 1, "cell.n_realizations", "must be at least 1")
    if blk.base_seed is not None:
        r.check(0 <= blk.base_seed < 2**64, "cell.base_seed", "must be an unsigned 64-bit integer")
    return blk


def _parse_pde(r: _Reader) -> PdeBlock:
    d = PdeBlock()
    domain = r.get("pde", "domain", _float_list, (d.a, d.b))
    blk = dict(
        n=r.get("pde", "n", _int, d.n),
        dt=r.get("pde", "dt", _float, d.dt),
        tau=r.get("pde", "tau", _float, d.tau),
        gamma=r.get("pde", "gamma", _float, d.gamma),
        alpha=r.get("pde", "alpha", _float, d.alpha),
        dv=r.get("pde", "dv_profile", _dv_profile, d.dv),
        u0=r.get("pde", "u0", _initial_profile, d.u0),
        v0=r.get("pde", "v0", _initial_profile, d.v0),
        epsilon_list=r.get("pde", "epsilon_list", _float_list, d.epsilon_list),
        seed=r.get("pde", "seed", _int, d.seed),
        shared_seed=r.get("pde", "shared_seed", _bool, d.shared_seed),
        n_realizations=r.get("pde", "n_realizations", _int, d.n_realizations),
        error_reduction=r.get("pde", "error_reduction", _float, d.error_reduction),
        picard_tol=r.get("pde", "picard_tol", _float, d.picard_tol),
        picard_max=r.get("pde", "picard_max", _int, d.picard_max),
    )
    if domain is not None:
        if len(domain) != 2 or not domain[0] < domain[1]:
            r.errors.append("pde.domain must be two increasing numbers a, b")
        else:
            blk["a"], blk["b"] = domain
    checks = [
        ("n", lambda v: v >= 2, "must be at least 2"),
        ("dt", lambda v: v > 0, "must be positive"),
        ("tau", lambda v: v > 0, "must be positive"),
        ("gamma", lambda v: v > 0, "must be positive"),
        ("alpha", lambda v: v > 0, "must be positive"),
        ("picard_tol", lambda v: v > 0, "must be positive"),
        ("picard_max", lambda v: v >= 1, "must be at least 1"),
        ("n_realizations", lambda v: v >= 1, "must be at least 1"),
        ("error_reduction", lambda v: 0 < v <= 1, "must lie in (0, 1]"),
        ("seed", lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
        ("epsilon_list", lambda v: all(e > 0 for e in v), "entries must be positive"),
        ("epsilon_list", lambda v: all(b < a for a, b in zip(v, v[1:])), "must be strictly decreasing"),
    ]
    for key, ok, msg in checks:
        if blk.get(key) is not None:
            r.check(ok(blk[key]), f"pde.{key}", msg)
    if blk["dt"] and blk["tau"] and blk["dt"] > 0 and blk["tau"] > 0:
        steps = blk["tau"] / blk["dt"]
        r.check(abs(steps - round(steps)) <= 1e-9 * steps, "pde.tau", "must be a multiple of pde.dt")
    return PdeBlock(**blk)


def _parse_output(r: _Reader) -> OutputBlock:
    d = OutputBlock()
    blk = OutputBlock(
        directory=r.get("output", "directory", str, d.directory),
        snapshot_stride=r.get("output", "snapshot_stride", _int, d.snapshot_stride),
    )
    if blk.snapshot_stride is not None:
        r.check(blk.snapshot_stride >= 1, "output.snapshot_stride", "must be at least 1")
    return blk


_KNOWN_SECTIONS = {"experiment", "field", "cell", "pde", "output"}


def parse_config_text(text: str, *, name: str = "experiment", source: str = "") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (D vs d)
    try:
        cp.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    r = _Reader(cp)
    for sec in cp.sections():
        if sec not in _KNOWN_SECTIONS:
            r.errors.append(f"{sec}: unknown section")
    exp_id = r.get("experiment", "id", str, name) if cp.has_section("experiment") else name
    spec = _parse_field(r)
    cell = _parse_cell(r)
    pde = _parse_pde(r)
    out = _parse_output(r)
    for sec in cp.sections():
        if sec in _KNOWN_SECTIONS:
            for key in cp.options(sec):
                if (sec, key) not in r.used:
                    r.errors.append(f"{sec}.{key}: unknown key")
    if r.errors:
        raise ConfigError(r.errors)
    return ExperimentConfig(exp_id, spec, cell, pde, out, source=source)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
    return parse_config_text(text, name=path.stem, source=str(path))


def config_echo(cfg: ExperimentConfig) -> dict:
    """Plain-data view of a config, suitable for JSON."""

    def plain(x):
        if hasattr(x, "__dataclass_fields__"):
            return {k: plain(getattr(x, k)) for k in x.__dataclass_fields__ if not k.startswith("_")}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        if hasattr(x, "value") and isinstance(getattr(x, "value"), str):  # enums
            return x.value
        if isinstance(x, float) and not math.isfinite(x):
            return repr(x)
        return x

    echo = plain(cfg)
    echo.pop("source", None)
    return echo
