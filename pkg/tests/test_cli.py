import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from probfree.cli import main, verify_report
from probfree.ftap import verify_measure
from probfree.market import Market
from probfree.measure import AtomicMeasure
from probfree.specfile import SpecError, parse_spec

SPECS = Path(__file__).resolve().parent.parent / "specs"
CALL, ARB, RISKLESS, BASKET = (str(SPECS / n) for n in
                               ("call.json", "arbitrage.json", "riskless.json", "basket.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_call_exports_measure(capsys, tmp_path):
    path = tmp_path / "mu.json"
    code, out, _ = run(capsys, "check", CALL, "--export", str(path))
    assert code == 0
    assert "arbitrage_free" in out
    mu = AtomicMeasure.from_dict(json.loads(path.read_text()))
    rep = verify_measure(parse_spec(Path(CALL).read_text()).market, mu)
    assert rep.ok()


def test_check_arbitrage_exit_2(capsys):
    code, out, _ = run(capsys, "check", ARB)
    assert code == 2
    assert "arbitrage portfolio" in out


def test_malformed_expression(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "space": {"dim": 1, "lo": [0], "hi": [1]},\n'
                   '  "assets": [{"payoff": ["add", 1, ["cord", 0]], "price": 1.5}]\n}\n')
    code, _, err = run(capsys, "check", str(bad))
    assert code == 1
    assert "line 3, column 36" in err and "cord" in err


@pytest.mark.parametrize("text, where", [
    ('{"space": {"dim": 1, "lo": [0], "hi": [1]}, "assets": [}', "line 1"),
    ('{"space": {"dim": 1, "lo": [0], "hi": [1]},\n "assets": [], "bogus": 1}', "line 1, column 1"),
    ('{"space": {"dim": 1, "lo": [0], "hi": [1]},\n "assets": [{"payoff": 1, "price": -2}]}', "line 2, column 13"),
    ('{"space": {"dim": 1, "lo": [0], "hi": [1]},\n "assets": [],\n "claims": [{"name": "x", "payoff": ["coord", 0]},\n'
     '  {"name": "neg", "payoff": ["sub", ["coord", 0], 2]}]}', "line 4, column 3"),
    ('{"space": {"dim": 1, "lo": [0], "hi": [1]},\n "assets": [{"riskless": true, "payoff": ["const", 2]}]}',
     "line 2, column 13"),
])
def test_spec_diagnostics(text, where):
    with pytest.raises(SpecError) as info:
        parse_spec(text)
    assert str(info.value).startswith(where)


def test_price_call(capsys):
    code, out, _ = run(capsys, "price", CALL, "call", "bond", "stock", "--format", "json")
    assert code == 0
    rep = json.loads(out)
    res = {r["claim"]: r for r in rep["results"]}
    assert res["call"]["interval"] == pytest.approx([0.0, 0.25], abs=1e-9)
    assert not res["call"]["replicable"]
    assert res["bond"]["interval"] == pytest.approx([0.7, 0.7], abs=1e-9) and res["bond"]["replicable"]
    assert res["stock"]["interval"] == pytest.approx([1.5, 1.5], abs=1e-9)
    for r in res.values():
        assert set(r) >= {"claim", "super", "sub", "interval", "gap", "iterations"}


def test_price_unknown_claim(capsys):
    code, _, err = run(capsys, "price", CALL, "nope")
    assert code == 1 and "nope" in err


def test_price_arbitrage_market(capsys):
    code, _, err = run(capsys, "price", ARB)
    assert code == 2 and "arbitrage" in err


def test_price_quote(capsys):
    code, out, _ = run(capsys, "price", CALL, "call", "--quote", "0.1", "--format", "json")
    assert code == 0
    assert json.loads(out)["results"][0]["quote"]["verdict"] == "no_arbitrage_price"


def test_viability_commands(capsys):
    assert run(capsys, "viability", CALL)[0] == 0
    code, out, _ = run(capsys, "viability", ARB)
    assert code == 2 and "inviable" in out
    code, out, _ = run(capsys, "viability", RISKLESS, "--format", "json")
    assert code == 0 and json.loads(out)["viability"] == "viable"


def test_riskless_spec_prices(capsys):
    code, out, _ = run(capsys, "price", RISKLESS, "--format", "json")
    assert code == 0
    assert json.loads(out)["results"][0]["interval"] == pytest.approx([2.0, 2.0], abs=1e-9)


@pytest.mark.parametrize("argv", [
    ("check", CALL), ("price", CALL), ("viability", CALL), ("check", ARB), ("price", BASKET, "best_of"),
])
def test_json_is_deterministic(capsys, argv):
    a = run(capsys, *argv, "--format", "json")
    b = run(capsys, *argv, "--format", "json")
    assert a[1] == b[1] and a[0] == b[0]


@pytest.mark.parametrize("argv", [
    ("check", CALL), ("check", ARB), ("price", CALL), ("viability", CALL), ("viability", ARB),
])
def test_reports_reverify(capsys, tmp_path, argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    report = json.loads(out)
    assert verify_report(report)["ok"]
    path = tmp_path / "report.json"
    path.write_text(out)
    code, vout, _ = run(capsys, "verify", str(path))
    assert code == 0 and "FAILED" not in vout


def test_round_trip_residuals_identical(capsys):
    _, out, _ = run(capsys, "check", CALL, "--format", "json")
    report = json.loads(out)
    m = Market.from_dict(report["market"])
    mu = AtomicMeasure.from_dict(report["measure"])
    again = verify_measure(m, mu).to_dict()
    for key in ("mass_error", "min_weight"):
        assert abs(again[key] - report["measure_report"][key]) <= 1e-15
    assert np.allclose(again["moment_errors"], report["measure_report"]["moment_errors"], rtol=0, atol=1e-15)


def test_tampered_report_fails(capsys, tmp_path):
    _, out, _ = run(capsys, "check", ARB, "--format", "json")
    report = json.loads(out)
    report["certificate"]["portfolio"][1] = 0.0
    assert not verify_report(report)["ok"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(report))
    assert run(capsys, "verify", str(path))[0] == 2


def test_flag_overrides(capsys):
    code, out, _ = run(capsys, "check", CALL, "--grid", "9", "--feas-tol", "1e-9", "--format", "json")
    assert code == 0 and json.loads(out)["grid"] == [9]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "probfree", "check", ARB], capture_output=True, text=True)
    assert proc.returncode == 2
