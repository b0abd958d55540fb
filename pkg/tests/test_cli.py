import json
import math
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from fundgap.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, dumps, main, resolve_options, run

SCHEMA = json.loads(resources.files("fundgap").joinpath("report_schema.json").read_text())

FAST_PAIRS = ["--bins", "8", "--per-bin", "32"]


def check(argv, code):
    got, report = run(argv)
    jsonschema.validate(json.loads(dumps(report)), SCHEMA)
    assert got == code, report.get("error")
    return report


# -- exit codes --------------------------------------------------------------------


def test_gap1d_zero_potential():
    r = check(["gap1d", "--potential", "0", "--diameter", "1"], EXIT_PASS)
    assert r["results"]["gap"] == pytest.approx(3 * math.pi**2, abs=1e-6)
    assert r["status"] == "pass"


def test_gap1d_crosscheck_and_fraction_values():
    r = check(["gap1d", "--potential", "x1^2", "--diameter", "1/2"], EXIT_PASS)
    assert r["inputs"]["diameter"] == 0.5
    r = check(["gap1d", "--potential", "x1^2", "--diameter", "2", "--crosscheck"], EXIT_PASS)
    assert r["evidence"]["crosscheck"]["passed"]


def test_gapnd_square_bound():
    r = check(["gapnd", "--domain", "square:1", "--potential", "0", "--h", "1/32"], EXIT_PASS)
    assert r["results"]["gap"] >= 3 * math.pi**2 / 2


def test_malformed_potential_reports_diagnostics(capsys):
    code = main(["gap1d", "--potential", "x1 + * 2"])
    assert code == EXIT_ERROR
    out = json.loads(capsys.readouterr().out)
    err = out["error"]
    assert err["field"] == "gap1d.potential"
    assert err["offset"] == 5 and "number" in err["expected"]


def test_unknown_flag_is_an_error():
    r = check(["gap1d", "--bogus", "1"], EXIT_ERROR)
    assert r["error"]["type"] == "ConfigError"


def test_non_positive_value_rejected():
    r = check(["gap1d", "--diameter=-1"], EXIT_ERROR)
    assert r["error"]["field"] == "gap1d.diameter"


def test_required_option_missing():
    r = check(["prufer"], EXIT_ERROR)
    assert r["error"]["field"] == "prufer.mu"


def test_odd_comparison_rejected():
    r = check(["gap1d", "--potential", "x1^3"], EXIT_ERROR)
    assert r["error"]["field"] == "gap1d.potential"


def test_verify_false_premise_fails_stage_one():
    r = check(["verify", "--domain", "square:1", "--potential", "0", "--comparison", "0.5*x1^2",
               *FAST_PAIRS], EXIT_FAIL)
    assert r["results"]["failed_stage"] == "convexity"
    assert r["status"] == "fail"


def test_verify_square_passes():
    r = check(["verify", "--domain", "square:1", "--h", "1/20", *FAST_PAIRS], EXIT_PASS)
    ev = r["evidence"]
    assert set(ev) == {"convexity", "fundamental_gap", "gap1d", "comparison"}
    assert r["results"]["gap_nd"] >= r["results"]["gap_1d"]
    assert any("smooth" in n for n in r["notes"])


def test_prufer_terminal_angle():
    r = check(["prufer", "--mu", str(math.pi**2), "--samples", "129"], EXIT_PASS)
    assert r["results"]["terminal"] == pytest.approx(-math.pi / 2, abs=1e-8)


# -- moduli verbs ---------------------------------------------------------------------


def test_moduli_continuity_pass_and_fail():
    base = ["moduli", "continuity", "--function", "x1", "--h", "1/32", *FAST_PAIRS]
    check(base + ["--modulus", "z"], EXIT_PASS)
    r = check(base + ["--modulus", "z/2"], EXIT_FAIL)
    assert r["results"]["report"]["worst"] > 0.4


def test_moduli_convexity_optimal():
    r = check(["moduli", "convexity", "--potential", "x1^2 + x2^2", "--optimal", "--h", "1/16",
               *FAST_PAIRS], EXIT_PASS)
    assert r["results"]["report"]["worst"] <= 1e-12


def test_moduli_contraction_expanding_field():
    r = check(["moduli", "contraction", "--field", "x1;x2", "--modulus", "0", "--h", "1/16",
               *FAST_PAIRS], EXIT_FAIL)
    assert r["results"]["report"]["worst"] > 1.0


def test_moduli_logconc_reports_calibration():
    r = check(["moduli", "logconc", "--h", "1/32", *FAST_PAIRS], EXIT_PASS)
    assert r["evidence"]["calibration"]["c_tol"] >= 0.05


# -- parabolic commands ----------------------------------------------------------------


def test_heat_drift_rate_and_preservation():
    r = check(["heat-drift", "--initial", "sin(pi*x1)", "--T", "0.3", "--dt", "1e-3",
               "--h", "1/128", "--expect-rate", str(math.pi**2), "--modulus", "sin(pi*z)",
               "--modulus-rate", str(math.pi**2), *FAST_PAIRS], EXIT_PASS)
    assert r["results"]["rate_check"]["passed"]
    assert r["results"]["preservation"]["passed"]


def test_heat_drift_wrong_rate_fails():
    check(["heat-drift", "--initial", "sin(pi*x1)", "--T", "0.3", "--dt", "1e-3", "--h", "1/64",
           "--expect-rate", "20"], EXIT_FAIL)


def test_evolve_psi_small():
    r = check(["evolve-psi", "--k", "1", "--T", "2", "--m", "100"], EXIT_PASS)
    run_ = r["results"]["runs"][0]
    assert run_["max_increase"] <= run_["increase_tolerance"]


def test_gap_decay_interval():
    r = check(["gap-decay", "--domain", "interval:-0.5,0.5", "--h", "1/64", *FAST_PAIRS], EXIT_PASS)
    assert r["results"]["rate"] >= r["results"]["gap_1d"] * 0.99


# -- config, outputs, determinism -----------------------------------------------------------


def test_config_file_sections(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[common]\nseed = 7\n\n[gap1d]\ndiameter = 2\npotential = x1^2\n")
    r = check(["gap1d", "--config", str(cfg)], EXIT_PASS)
    assert r["inputs"]["diameter"] == 2.0
    # command line wins over the file
    r = check(["gap1d", "--config", str(cfg), "--diameter", "1"], EXIT_PASS)
    assert r["inputs"]["diameter"] == 1.0


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[gap1d]\nwidth = 2\n")
    r = check(["gap1d", "--config", str(cfg)], EXIT_ERROR)
    assert r["error"]["field"] == "gap1d.width"


def test_config_missing_file(tmp_path):
    r = check(["gap1d", "--config", str(tmp_path / "nope.ini")], EXIT_ERROR)
    assert r["error"]["field"] == "config"


def test_resolve_options_defaults():
    a = resolve_options("gapnd", {})
    assert a["h"] == 1 / 64 and a["richardson"] is True


def test_out_and_csv(tmp_path):
    out = tmp_path / "r.json"
    code = main(["gap1d", "--out", str(out), "--csv-dir", str(tmp_path / "csv")])
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    for name in rep["results"]["artifacts"]:
        assert (tmp_path / "csv" / name).read_text().startswith("z,")


def test_timing_only_on_request():
    _, r = run(["gap1d"])
    assert "wall_time_s" not in r
    _, r = run(["gap1d", "--timing"])
    assert r["wall_time_s"] > 0


@pytest.mark.parametrize("argv", [
    ["gap1d", "--potential=-x1^2 + x1^4", "--diameter", "2"],
    ["moduli", "convexity", "--potential", "x1^2", "--comparison", "x1^2", "--h", "1/16", *FAST_PAIRS],
    ["verify", "--h", "1/20", *FAST_PAIRS],
])
def test_reports_byte_identical(argv):
    a, b = dumps(run(argv)[1]), dumps(run(argv)[1])
    assert a == b


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fundgap.cli", "gap1d"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["gap"] == pytest.approx(3 * math.pi**2, abs=1e-6)
    bad = subprocess.run([sys.executable, "-m", "fundgap.cli", "gap1d", "--potential", "sin("],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and bad.stderr.startswith("fundgap: error")


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "gap1d" in capsys.readouterr().out
