import csv
import io
import json
import logging
import math

import pytest

from triphoton import cli, stdform
from triphoton.cli import COLUMNS, ConfigError, main, render, run_sweep, validate_config


def _rows_from_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_defaults_are_filled():
    cfg = validate_config({})
    assert cfg.dims == (16, 16, 16)
    assert cfg.orders == (1, 2, 3) and cfg.gain == 1.0 and cfg.pump == "parametric"
    assert abs(cfg.alpha_p - math.sqrt(10)) < 1e-15
    assert validate_config({"pump": "quantum"}).dims == (16, 16, 16, 30)


def test_order_headroom_error():
    with pytest.raises(ConfigError, match="cutoff too small for order 3") as info:
        validate_config({"dims": "8,8,8", "orders": "3"})
    assert {name for name, _ in info.value.errors} == {"dims"}


def test_negative_kappa_is_rejected():
    with pytest.raises(ConfigError) as info:
        validate_config({"kappa": -1})
    assert info.value.errors[0][0] == "kappa"


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"steps": 0}, "steps"),
        ({"orders": ""}, "orders"),
        ({"pump": "classical"}, "pump"),
        ({"dims": "16,16,16,30"}, "dims"),
        ({"format": "xml"}, "format"),
        ({"gain": 0}, "gain"),
        ({"xi_min": 0.3, "xi_max": 0.1}, "xi_max"),
        ({"bogus": 1}, "bogus"),
        ({"steps": "many"}, "steps"),
    ],
)
def test_each_violation_names_its_field(raw, field):
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    assert field in {name for name, _ in info.value.errors}


def test_all_errors_reported_together():
    with pytest.raises(ConfigError) as info:
        validate_config({"kappa": -1, "steps": 0})
    assert {name for name, _ in info.value.errors} == {"kappa", "steps"}


def test_single_zero_point_gives_zero_witnesses():
    cfg = validate_config({"steps": 1, "xi_min": 0, "xi_max": 0, "orders": "1"})
    rows = run_sweep(cfg).rows
    assert len(rows) == 1
    row = rows[0]
    for col in ("F_1", "F_2", "F_3", "W", "W_anchor_2", "W_anchor_3", "margin_1", "margin_2", "margin_3"):
        assert row[col] == 0
    assert row["physical"] and not row["full_inseparable"]


def test_one_row_per_point_and_order():
    cfg = validate_config({"steps": 4, "xi_max": 0.1, "dims": "12,12,12"})
    rows = run_sweep(cfg).rows
    assert [(r["n"]) for r in rows] == [1, 2, 3] * 4
    assert all(set(r) == set(COLUMNS) for r in rows)
    assert all(r["mean_N_4"] is None for r in rows)


def test_csv_header_and_json_values_match(tmp_path):
    cfg = validate_config({"steps": 3, "xi_max": 0.15, "dims": "12,12,12", "check_convergence": True})
    result = run_sweep(cfg)
    text_csv = render(result, "csv")
    payload = json.loads(render(result, "json"))
    assert text_csv.splitlines()[0].split(",") == list(COLUMNS)
    assert payload["columns"] == list(COLUMNS)
    for crow, jrow in zip(_rows_from_csv(text_csv), payload["rows"]):
        for col in COLUMNS:
            value = jrow[col]
            if value is None:
                assert crow[col] == ""
            elif isinstance(value, bool):
                assert crow[col] == str(value).lower()
            elif isinstance(value, float):
                assert float(crow[col]) == value
            else:
                assert crow[col] == str(value)


def test_runs_are_byte_identical(tmp_path):
    outs = []
    for threads in ("1", "3"):
        path = tmp_path / f"run{threads}.csv"
        assert main(["--steps", "5", "--xi-max", "0.2", "--dims", "12,12,12", "--threads", threads,
                     "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_with_flag_override(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# sweep\nsteps = 2\nxi-max = 0.05\ndims = 12,12,12\norders = 1,2\nformat = json\n")
    assert main(["--config", str(conf), "--orders", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["config"]["orders"] == [1] and payload["config"]["steps"] == 2
    assert len(payload["rows"]) == 2


def test_config_error_exit_code(capsys):
    assert main(["--dims", "8,8,8"]) == cli.EXIT_CONFIG
    assert "cutoff too small for order 3" in capsys.readouterr().err
    assert main(["--config", "/nonexistent/path.conf"]) == cli.EXIT_CONFIG


def test_convergence_failure_exit_code(tmp_path, capsys):
    code = main(["--dims", "11,11,11", "--xi-max", "0.6", "--steps", "3", "--check-convergence",
                 "--out", str(tmp_path / "o.csv")])
    assert code == cli.EXIT_CONVERGENCE
    assert "not converged" in capsys.readouterr().err
    rows = _rows_from_csv((tmp_path / "o.csv").read_text())
    assert "false" in {r["converged"] for r in rows}


def test_default_sweep_is_converged():
    result = run_sweep(validate_config({"check_convergence": True}))
    assert result.converged
    assert all(r["physical"] for r in result.rows)


def test_quantum_pump_sweep_reports_pump_occupation():
    cfg = validate_config({"pump": "quantum", "dims": "6,6,6,30", "orders": "1", "steps": 2, "xi_max": 0.1})
    rows = run_sweep(cfg).rows
    assert len(rows) == 2
    total = [r["mean_N_1"] + r["mean_N_4"] for r in rows]
    assert abs(total[0] - total[1]) < 1e-7
    assert rows[1]["F_1"] < 0


def test_failed_reduction_is_surfaced(monkeypatch, caplog):
    def boom(cov, tol=stdform.PHYS_TOL):
        raise stdform.StandardFormError("no bracket")

    monkeypatch.setattr(stdform, "reduce_to_standard_form", boom)
    cfg = validate_config({"steps": 2, "xi_max": 0.1, "dims": "12,12,12", "orders": "1"})
    with caplog.at_level(logging.WARNING):
        rows = run_sweep(cfg).rows
    assert rows[1]["theorem2_1"] == "failed" and rows[1]["margin_1"] is None
    assert "standard form failed" in caplog.text
