import csv
import io
import json

import pytest
from filelock import FileLock

from shiftindex.cli_reports import (SCHEMA, ConfigError, RunReport, fibonacci_sphere, parse_config,
                                    run)
from shiftindex.lambda_ring import psi_closed_form


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# --- config parsing ----------------------------------------------------------------------


def test_defaults_cover_every_command():
    for cmd in ("psi", "index", "sweep", "certify"):
        cfg = parse_config("", cmd)
        expected = {k for k, v in SCHEMA.items() if cmd in v[2]}
        assert set(cfg.values) == expected
    assert parse_config("", "index").symbol_sphere_degree == 71


def test_config_values_are_literals():
    cfg = parse_config("radii = [8, 12]  # comment\nbump_width = 1.5\ntest_map = scalar\nN = 1\n",
                       "index")
    assert cfg.radii == [8, 12]
    assert cfg.bump_width == 1.5
    assert cfg.test_map == "scalar"
    assert parse_config("radii = 10", "sweep").radii == [10]


def test_unknown_key_reports_line_and_field():
    with pytest.raises(ConfigError, match=r"run.cfg:3: field 'colour': unknown key"):
        parse_config("seed = 1\n# note\ncolour = 2\n", "psi", source="run.cfg")


def test_bad_value_reports_line_and_field():
    with pytest.raises(ConfigError, match=r"<config>:2: field 'radii'"):
        parse_config("seed = 4\nradii = [8, 'x']\n", "index")
    with pytest.raises(ConfigError, match="field 'd_max'"):
        parse_config("d_max = many", "psi")


def test_key_of_other_command_rejected():
    with pytest.raises(ConfigError, match="not used by command 'psi'"):
        parse_config("radii = [8]", "psi")


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError, match="parse error"):
        parse_config("seed = 1\nseed = 2\n", "psi")
    with pytest.raises(ConfigError):
        parse_config("", "plot")


def test_empty_sweep_list_rejected():
    with pytest.raises(ConfigError, match="field 'radii': empty sweep list"):
        parse_config("radii = []", "sweep")
    with pytest.raises(ConfigError, match="empty sweep list"):
        parse_config("resolutions = []", "index")


def test_semantic_validation():
    bad = {"radii = [5]": "radius below", "resolutions = [9]": "even",
           "degree = 3": "degrees -2..2", "test_map = scalar": "N = 1",
           "trace_power = 2": ">= 4", "threads = 0": ">= 1"}
    for text, msg in bad.items():
        with pytest.raises(ConfigError, match=msg):
            parse_config(text, "sweep")


def test_cli_config_errors_exit_two(tmp_path, capsys):
    assert run(["psi", "--config", write(tmp_path, "bogus = 1\n"), "--out", str(tmp_path / "o")]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert run(["psi", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert run(["psi", "--threads", "0", "--out", str(tmp_path / "o")]) == 2


# --- commands ----------------------------------------------------------------------------


def test_psi_default_passes(tmp_path):
    buf = io.StringIO()
    assert run(["psi", "--out", str(tmp_path)], out=buf) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True
    assert set(report["verdicts"]) == {"psi_series_closed_form", "psi_in_gamma_low_degree",
                                       "psi_closed_forms", "psi_multiplicative_and_stable",
                                       "chern_psi_equals_todd"}
    assert "7/12*Λ^2E" in buf.getvalue()
    assert "timings" not in report
    assert "total" in json.loads((tmp_path / "timings.json").read_text())


def test_psi_degree_zero_passes(tmp_path):
    cfg = write(tmp_path, "d_max = 0\n")
    assert run(["psi", "--config", cfg, "--out", str(tmp_path / "o")], out=io.StringIO()) == 0


def test_psi_corrupted_fixture_fails_with_diff(tmp_path):
    terms = psi_closed_form(5).to_terms()
    terms[2]["numerator_n_coefficients"] = [8]
    fixture = tmp_path / "expected.json"
    fixture.write_text(json.dumps({"5": terms}))
    cfg = write(tmp_path, f"expected_fixture = {fixture}\nd_max = 2\n")
    buf = io.StringIO()
    assert run(["psi", "--config", cfg, "--out", str(tmp_path / "o")], out=buf) == 1
    text = buf.getvalue()
    assert "psi_in_exterior(5) differs" in text
    assert "- expected" in text and "+ computed" in text
    assert "FAIL  psi_closed_forms" in text


def test_certify_passes_and_reports_margin(tmp_path):
    buf = io.StringIO()
    assert run(["certify", "--out", str(tmp_path)], out=buf) == 0
    stages = json.loads((tmp_path / "report.json").read_text())["stages"]
    assert stages["d1_margin"]["margin"] == pytest.approx(5 / 3, abs=1e-9)
    assert stages["ellipticity"]["residual"] < 1e-10
    assert stages["ellipticity"]["sample_count"] == 16 ** 3 * 26


def test_sweep_single_point_writes_csv(tmp_path):
    cfg = write(tmp_path, "radii = [8]\nresolutions = [32]\n")
    out = tmp_path / "o"
    assert run(["sweep", "--config", cfg, "--out", str(out)], out=io.StringIO()) == 0
    with open(out / "sweeps" / "radius.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["R"] for r in rows] == ["8"]
    assert abs(float(rows[0]["estimate"]) - 1) < 0.05
    with open(out / "sweeps" / "resolution.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["M"] == "32" and float(rows[0]["gap"]) < 1e-3


def test_locked_output_directory_exits_three(tmp_path):
    lock = FileLock(str(tmp_path / ".lock"))
    with lock.acquire(timeout=0):
        assert run(["psi", "--out", str(tmp_path)], out=io.StringIO()) == 3
    assert not (tmp_path / "report.json").exists()


def test_report_json_roundtrip_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["certify", "--seed", "7", "--out", str(d)], out=io.StringIO()) == 0
    text = (a / "report.json").read_bytes()
    assert text == (b / "report.json").read_bytes()
    rep = RunReport.from_json(text.decode())
    assert rep.passed
    assert rep.to_json().encode() == text
    assert rep.config["seed"] == 7


def test_report_without_verdicts_does_not_pass():
    assert not RunReport(config={}).passed
    assert RunReport(config={}, verdicts={"a": True, "b": False}).passed is False


def test_fibonacci_sphere_is_unit_and_balanced():
    pts = fibonacci_sphere(1000)
    assert pts.shape == (1000, 3)
    assert abs((pts ** 2).sum(axis=1) - 1).max() < 1e-12
    assert abs(pts.mean(axis=0)).max() < 1e-2
