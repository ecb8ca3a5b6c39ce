import json
import math
from pathlib import Path

import numpy as np
import pytest

from entthermo import cli, report
from entthermo.campaign import CampaignConfig, chain_scenario, run_campaign, slacks_csv, summarize
from entthermo.protocol import run_scenario
from entthermo.scenario_io import ScenarioFileError, bundled_text, dumps_scenario, load, loads

GOLDEN = Path(__file__).parent / "golden"


def scenario_doc(**overrides):
    doc = json.loads(bundled_text("cnot"))
    doc["scenario"].update(overrides)
    return doc


def numbers_close(a, b, tol=1e-10):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(numbers_close(a[k], b[k], tol) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(numbers_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, (int, float)):
        return (math.isnan(a) and math.isnan(b)) or abs(a - b) <= tol
    return a == b


# --- scenario files -------------------------------------------------------------------

def test_bundled_scenarios_load():
    for name in ("null", "cnot", "complete_erase"):
        s = load(name)
        assert s.description


def test_unitary_forms():
    g = [[[0, 0], [0.3, 0], [0, 0], [0, 0]], [[0.3, 0], [0, 0], [0, 0], [0, 0]],
         [[0, 0], [0, 0], [0, 0], [0, 0]], [[0, 0], [0, 0], [0, 0], [0, 0]]]
    for form in ({"generator": g}, {"haar_seed": 3}, {"permutation": [1, 0, 2, 3]}, "identity"):
        s = loads(json.dumps(scenario_doc(U_SMB=form)))
        u = s.U_SMB
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12
    s = loads(json.dumps(scenario_doc(U_SMB={"haar_seed": 3})))
    t = loads(json.dumps(scenario_doc(U_SMB={"haar_seed": 3})))
    assert np.array_equal(s.U_SMB, t.U_SMB)


def test_non_unitary_names_field_and_line():
    bad = [[[1, 0], [1, 0], [0, 0], [0, 0]], [[0, 0], [1, 0], [0, 0], [0, 0]],
           [[0, 0], [0, 0], [1, 0], [0, 0]], [[0, 0], [0, 0], [0, 0], [1, 0]]]
    text = json.dumps(scenario_doc(U_SMB={"matrix": bad}), indent=2)
    with pytest.raises(ScenarioFileError) as e:
        loads(text, "bad.json")
    assert e.value.field == "scenario.U_SMB"
    assert '"U_SMB"' in text.splitlines()[e.value.line - 1]
    assert str(e.value).startswith(f"bad.json:{e.value.line}: scenario.U_SMB")


def test_other_validation_errors():
    cases = [
        (scenario_doc(beta=-1), "scenario.beta"),
        (scenario_doc(rho_S={"diagonal": [0.5, 0.6]}), "scenario.rho_S"),
        (scenario_doc(H_B={"matrix": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]}), "scenario.H_B"),
        (scenario_doc(thermalization=["identity"]), "scenario.thermalization"),
        (scenario_doc(bogus=1), "scenario.bogus"),
        ({**scenario_doc(), "schema_version": "9"}, "schema_version"),
    ]
    for doc, field in cases:
        with pytest.raises(ScenarioFileError) as e:
            loads(json.dumps(doc, indent=2))
        assert e.value.field == field


def test_json_syntax_error_has_line():
    with pytest.raises(ScenarioFileError) as e:
        loads('{\n  "schema_version": "1",\n  oops\n}')
    assert e.value.line == 3


def test_scenario_dump_round_trip():
    s = chain_scenario(4)
    t = loads(dumps_scenario(s))
    assert np.array_equal(s.U_SMB, t.U_SMB) and np.array_equal(s.erase.U_eras, t.erase.U_eras)
    assert np.array_equal(s.rho_S, t.rho_S) and s.beta == t.beta
    a, _ = run_scenario(s)
    b, _ = run_scenario(t)
    assert a.to_dict() == b.to_dict()


# --- rendering ------------------------------------------------------------------------

def test_json_csv_json_round_trip_is_bit_exact():
    d = report.clean(run_scenario(chain_scenario(1))[0].to_dict())
    via_json = json.loads(report.dumps(d))
    via_csv = report.from_csv(report.to_csv(via_json))
    assert json.loads(report.dumps(via_csv)) == via_json == d


def test_fmt_float_round_trips_and_stays_float():
    for x in (0.1, 1.0, -2.5e-17, 1e300, 1 / 3):
        text = report.fmt_float(x)
        assert float(text) == x and isinstance(json.loads(text), float)
    assert report.fmt_float(math.inf) == "Infinity"


def test_md_has_one_row_per_bound():
    md = report.render(run_scenario(chain_scenario(1))[0].to_dict(), "md")
    section = md.split("## bounds")[1].split("## invariants")[0]
    rows = [l for l in section.splitlines() if l.startswith("| ") and not l.startswith("| id")]
    assert [r.split("|")[1].strip() for r in rows] == ["meas", "meas_sharp", "eras1", "eras_general", "eras2", "composed"]
    assert "| id | LHS | RHS | slack | tolerance | pass |" in section


# --- commands -------------------------------------------------------------------------

def test_run_null_exit_zero(capsys):
    assert cli.main(["run", "null", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    for c in d["bounds"]:
        if c["applicable"]:
            assert abs(c["slack"]) < 1e-9


def test_run_cnot_matches_golden_files(tmp_path):
    assert cli.main(["run", "cnot", "--format", "md", "--out", str(tmp_path / "r.md")]) == 0
    assert (tmp_path / "r.md").read_bytes() == (GOLDEN / "cnot_report.md").read_bytes()
    assert cli.main(["run", "cnot", "--format", "json", "--out", str(tmp_path / "r.json")]) == 0
    got = json.loads((tmp_path / "r.json").read_text())
    want = json.loads((GOLDEN / "cnot_report.json").read_text())
    assert numbers_close(got, want)


def test_run_validation_error_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(scenario_doc(U_SMB={"matrix": [[[2, 0]] * 4] * 4}), indent=2))
    assert cli.main(["run", str(p)]) == 2
    assert "scenario.U_SMB" in capsys.readouterr().err


def test_run_capacity_error_exit_4(tmp_path, capsys):
    doc = {"schema_version": "1", "scenario": {
        "beta": 1.0, "d_S": 3, "memory_blocks": [{"spectrum": [0, 0.1, 0.2]}, {"spectrum": [0.3, 0.4, 0.5]}],
        "H_B": {"spectrum": [0.0, 0.2, 0.4]}, "rho_S": {"diagonal": [0.5, 0.3, 0.2]},
        "U_SMB": {"haar_seed": 1}}}
    p = tmp_path / "big.json"
    p.write_text(json.dumps(doc))
    assert cli.main(["run", str(p)]) == 4
    assert "capacity" in capsys.readouterr().err


def test_report_renders_run_artifacts(tmp_path, capsys):
    cli.main(["run", "cnot", "--format", "json", "--out", str(tmp_path / "r.json")])
    cli.main(["run", "cnot", "--format", "csv", "--out", str(tmp_path / "r.csv")])
    assert cli.main(["report", str(tmp_path / "r.json"), "--format", "md", "--out", str(tmp_path / "a.md")]) == 0
    assert cli.main(["report", str(tmp_path / "r.csv"), "--format", "md", "--out", str(tmp_path / "b.md")]) == 0
    assert (tmp_path / "a.md").read_bytes() == (GOLDEN / "cnot_report.md").read_bytes()
    assert (tmp_path / "b.md").read_bytes() == (GOLDEN / "cnot_report.md").read_bytes()
    assert cli.main(["report", str(tmp_path / "missing")]) == 2


def test_verify_outputs_and_env_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ENTTHERMO_OUT_DIR", str(tmp_path / "env"))
    assert cli.main(["verify", "--trials", "2", "--seed", "3", "--family", "erase-canonical"]) == 0
    out = tmp_path / "env"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ok"] and summary["trials"] == 2 and summary["failing_seeds"] == []
    header = (out / "slacks.csv").read_text().splitlines()[0]
    assert header == "bound_id,trial,seed,lhs,rhs,slack,tolerance,pass"
    assert cli.main(["report", str(out), "--format", "md"]) == 0
    assert "# Verification summary" in capsys.readouterr().out


def test_verify_bounds_subset(tmp_path):
    assert cli.main(["verify", "--trials", "1", "--seed", "1", "--family", "measurement",
                     "--bounds", "meas", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "slacks.csv").read_text().splitlines()[1:]
    bound_rows = {r.split(",")[0] for r in rows if not r.split(",")[0].startswith(("inv:", "tight:"))}
    assert bound_rows == {"meas"}


def test_verify_rejects_unknown_bound():
    with pytest.raises(SystemExit):
        cli.main(["verify", "--bounds", "nope"])


def test_mis_signed_bound_is_caught_and_replayable(tmp_path, capsys):
    code = cli.main(["verify", "--trials", "3", "--seed", "5", "--family", "measurement",
                     "--flip-bound", "meas", "--out", str(tmp_path)])
    assert code == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["checks"]["meas"]["failed"] == 3
    seeds = [int(s) for s in (tmp_path / "failing_seeds.txt").read_text().split()]
    assert seeds == summary["failing_seeds"] and len(seeds) == 3
    replay = tmp_path / "replay"
    assert cli.main(["verify", "--replay", ",".join(map(str, seeds)), "--family", "measurement",
                     "--out", str(replay)]) == 0


def test_campaign_in_process_matches_serialized():
    cfg = CampaignConfig(trials=2, master_seed=11, family="complete-erase", lemma1=False)
    res = run_campaign(cfg)
    s = summarize(cfg, res)
    assert s["checks"]["composed"]["passed"] == 2
    assert slacks_csv(res) == slacks_csv(run_campaign(cfg))
