import json
import math
from pathlib import Path

import pytest

from kshomog.harness.cli import EXIT_ASSERTION, EXIT_ERROR, EXIT_OK, main
from kshomog.harness.config import ConfigError, parse_call, parse_config, parse_config_text
from kshomog.harness.output import Report, Table, emit_csv, emit_report, format_value
from kshomog.random_fields import FieldKind

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

COIN = """
[field]
kind = checkerboard
d_levels = 1, 4
chi_levels = 1
"""

SMALL_SWEEP = COIN + """
[cell]
rho_list = 8, 64
n_realizations = 12

[pde]
n = 64
dt = 5e-3
tau = 0.1
epsilon_list = 1/4, 1/8, 1/16
seed = 500
n_realizations = 2
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- config ------------------------------------------------------------------------
def test_defaults_fill_in():
    cfg = parse_config_text(COIN, name="coin")
    assert cfg.experiment_id == "coin"
    assert cfg.field.kind is FieldKind.CHECKERBOARD
    assert cfg.field.params.d_probs == (0.5, 0.5)
    assert cfg.cell.rho_list == (8.0, 32.0, 128.0, 512.0)
    assert (cfg.pde.a, cfg.pde.b, cfg.pde.n, cfg.pde.gamma) == (0.0, 1.0, 256, 1.0)
    assert cfg.pde.u0.kind == "raised_cosine"


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg = parse_config(path)
        assert cfg.experiment_id == path.stem
    cfg = parse_config(CONFIGS / "checkerboard_epsilon_sweep.ini")
    assert cfg.pde.epsilon_list == (1 / 8, 1 / 16, 1 / 32, 1 / 64)


def test_epsilon_list_must_decrease():
    with pytest.raises(ConfigError) as info:
        parse_config_text(COIN + "[pde]\nepsilon_list = 1/8, 1/4\n")
    assert "pde.epsilon_list must be strictly decreasing" in info.value.errors


def test_all_errors_reported_with_paths():
    text = COIN + "[pde]\ngamma = -1\nn = 1\nu0 = sawtooth(3)\nbogus = 2\n[cell]\nrho_list = 32, 8\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    errs = info.value.errors
    assert "pde.gamma must be positive" in errs
    assert "pde.n must be at least 2" in errs
    assert any(e.startswith("pde.u0: unknown preset 'sawtooth'") for e in errs)
    assert "pde.bogus: unknown key" in errs
    assert "cell.rho_list must be strictly increasing" in errs
    assert len(errs) == 5


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[cell]\n", "field: missing section"),
        ("[field]\nkind = fractal\n", "field.kind: unknown kind"),
        (COIN + "[pde]\ndt = 0.3\ntau = 1\n", "pde.tau must be a multiple of pde.dt"),
        (COIN + "[pde]\nn = 1.5\n", "pde.n: expected an integer"),
        ("[field]\nkind = checkerboard\nd_levels = 0, 4\n", "field: diffusion bounds"),
        (COIN + "[extra]\nx = 1\n", "extra: unknown section"),
    ],
)
def test_specific_errors(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert any(needle in e for e in info.value.errors), info.value.errors


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/x.ini")


def test_parse_call():
    assert parse_call("gaussian(0.5, 1/10, height=2)") == ("gaussian", [0.5, 0.1], {"height": 2.0})
    assert parse_call("constant") == ("constant", [], {})
    with pytest.raises(ValueError):
        parse_call("f(a=1, 2)")


# -- output ------------------------------------------------------------------------
def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(math.nan) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert format_value(True) == "true"
    assert format_value(7) == "7"


def test_empty_table_has_header(tmp_path):
    path = emit_csv(Table(("a", "b")), tmp_path / "t.csv")
    assert path.read_bytes() == b"a,b\n"


def test_csv_is_byte_stable(tmp_path):
    t = Table(("x", "y"))
    t.add(1, 1 / 3)
    t.add(2, 2 / 3)
    a = emit_csv(t, tmp_path / "a.csv").read_bytes()
    b = emit_csv(t, tmp_path / "b.csv").read_bytes()
    assert a == b == b"x,y\n1,0.33333333333333331\n2,0.66666666666666663\n"


def test_row_width_checked():
    with pytest.raises(ValueError):
        Table(("a",)).add(1, 2)


def test_nan_fails_report(tmp_path):
    rep = Report("r", {})
    rep.check("ok", True)
    t = Table(("v",))
    t.add(1.0)
    rep.tables["t"] = t
    assert rep.passed
    t.add(math.nan)
    assert not rep.passed
    emit_report(rep, tmp_path / "r.json")
    body = json.loads((tmp_path / "r.json").read_text())
    assert body["passed"] is False
    assert body["checks"][-1]["name"] == "finite_values"
    assert body["tables"]["t"]["rows"][1] == ["nan"]
    assert (tmp_path / "r.timings.json").exists()


# -- cli -------------------------------------------------------------------------
def test_field_sample(tmp_path, capsys):
    cfg = write(tmp_path, COIN)
    rc = main(["field", "sample", "--config", str(cfg), "--out", str(tmp_path), "--n", "10", "--b", "10"])
    assert rc == EXIT_OK
    lines = (tmp_path / "field_sample.csv").read_text().splitlines()
    assert lines[0] == "y_mid,D,chi" and len(lines) == 11


def test_cell_solve_and_misaligned(tmp_path, capsys):
    cfg = write(tmp_path, COIN)
    assert main(["cell", "solve", "--config", str(cfg), "--out", str(tmp_path), "--rho", "16", "--n-cells", "32"]) == EXIT_OK
    row = (tmp_path / "cell_solve.csv").read_text().splitlines()[1].split(",")
    assert abs(float(row[2]) - float(row[4])) <= 1e-12
    rc = main(["cell", "solve", "--config", str(cfg), "--out", str(tmp_path), "--rho", "7.5", "--n-cells", "15"])
    assert rc == EXIT_ERROR
    assert "not an integer multiple" in capsys.readouterr().err


def test_effective_commands(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    assert main(["effective", "estimate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert main(["effective", "rho-sweep", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "rho_sweep.csv").read_text().splitlines()
    assert rows[0].startswith("rho,n_realizations,mean_D") and len(rows) == 3


def test_pde_run(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    for mode in ("micro", "macro"):
        rc = main(["pde", "run", "--config", str(cfg), "--out", str(tmp_path), "--mode", mode, "--stride", "10"])
        assert rc == EXIT_OK
        diag = (tmp_path / f"pde_{mode}_diagnostics.csv").read_text().splitlines()
        assert len(diag) == 1 + 21
    snaps = (tmp_path / "pde_macro_snapshots.csv").read_text().splitlines()
    assert len(snaps) == 1 + 3 * 64


def test_experiment_epsilon_sweep(tmp_path):
    cfg = write(tmp_path, SMALL_SWEEP)
    rc = main(["experiment", "epsilon-sweep", "--config", str(cfg), "--out", str(tmp_path), "--threads", "2"])
    body = json.loads((tmp_path / "epsilon_sweep_report.json").read_text())
    names = [c["name"] for c in body["checks"]]
    assert names[:2] == ["mass_conservation", "nonnegative_u"]
    assert rc == (EXIT_OK if body["passed"] else EXIT_ASSERTION)
    assert next(c for c in body["checks"] if c["name"] == "mass_conservation")["passed"]
    runs = (tmp_path / "epsilon_runs.csv").read_text().splitlines()
    assert len(runs) == 1 + 3 * 2
    assert [r.split(",")[1] for r in runs[1:3]] == ["500", "501"]


def test_constant_field_experiment(tmp_path):
    rc = main(["experiment", "epsilon-sweep", "--config", str(CONFIGS / "constant_field.ini"), "--out", str(tmp_path)])
    assert rc == EXIT_OK
    body = json.loads((tmp_path / "epsilon_sweep_report.json").read_text())
    assert {"micro_equals_macro", "finite_values"} <= {c["name"] for c in body["checks"]}


def test_failed_check_exit_code(tmp_path):
    # demanding a 100x shrink of the dispersion cannot pass
    cfg = write(tmp_path, COIN + "[cell]\nrho_list = 8, 32\nn_realizations = 16\nsd_shrink_factor = 100\n")
    assert main(["experiment", "rho-sweep", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_ASSERTION


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, COIN + "[pde]\ngamma = 0\n")
    assert main(["experiment", "rho-sweep", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "pde.gamma must be positive" in capsys.readouterr().err


def test_seed_override(tmp_path):
    cfg = write(tmp_path, COIN)
    out = []
    for seed in ("1", "2", "1"):
        main(["field", "sample", "--config", str(cfg), "--out", str(tmp_path), "--seed", seed])
        out.append((tmp_path / "field_sample.csv").read_bytes())
    assert out[0] == out[2] != out[1]
    assert main(["field", "sample", "--config", str(cfg), "--out", str(tmp_path), "--seed", "-3"]) == EXIT_ERROR
