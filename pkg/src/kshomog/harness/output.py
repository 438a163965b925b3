"""CSV tables and JSON reports with byte-stable formatting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = ["Table", "Check", "Report", "OutputError", "format_value", "emit_csv", "emit_report"]


class OutputError(OSError):
    pass


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def has_nan(self) -> bool:
        return any(
            isinstance(v, (float, np.floating)) and math.isnan(v) for r in self.rows for v in r
        )


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Report:
    experiment_id: str
    config: dict
    tables: dict[str, Table] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    @property
    def all_checks(self) -> list[Check]:
        """Explicit checks plus the implicit "every table value is finite" flag."""
        nan_tables = sorted(k for k, t in self.tables.items() if t.has_nan())
        finite = Check(
            "finite_values",
            not nan_tables,
            "NaN in " + ", ".join(nan_tables) if nan_tables else "",
        )
        return [*self.checks, finite]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.all_checks)


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def table_text(table: Table) -> str:
    lines = [",".join(table.columns)]
    lines += [",".join(format_value(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def emit_csv(table: Table, path: str | Path) -> Path:
    path = Path(path)
    _write(path, table_text(table))
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return format_value(x) if not math.isfinite(x) else float(x)
    return x


def emit_report(report: Report, path: str | Path, *, timings_path: str | Path | None = None) -> Path:
    """Write ``report`` as JSON.

    Wall-clock timings vary run to run, so they go to a separate file
    (``timings_path``, default ``<stem>.timings.json``); the report itself is
    byte-identical for identical inputs.
    """
    path = Path(path)
    body = {
        "experiment_id": report.experiment_id,
        "passed": report.passed,
        "checks": [
            {"name": c.name, "passed": c.passed, "detail": c.detail} for c in report.all_checks
        ],
        "config": _jsonable(report.config),
        "tables": {
            name: {"columns": list(t.columns), "rows": [[format_value(v) for v in r] for r in t.rows]}
            for name, t in report.tables.items()
        },
    }
    _write(path, json.dumps(body, indent=2, sort_keys=True) + "\n")
    tpath = Path(timings_path) if timings_path else path.with_name(path.stem + ".timings.json")
    _write(tpath, json.dumps(_jsonable(report.timings), indent=2, sort_keys=True) + "\n")
    return path


def summary_lines(report: Report) -> Sequence[str]:
    out = []
    for c in report.all_checks:
        mark = "PASS" if c.passed else "FAIL"
        out.append(f"[{mark}] {c.name}" + (f": {c.detail}" if c.detail else ""))
    return out
