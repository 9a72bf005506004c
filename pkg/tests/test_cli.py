import json

import pytest
from click.testing import CliRunner

from conftest import FEEDER_DIR
from mdopf.cli import main

TWOBUS = str(FEEDER_DIR / "twobus.json")
EIGHTBUS = str(FEEDER_DIR / "eightbus.json")


@pytest.fixture
def runner():
    return CliRunner()


class TestSolveCommand:
    def test_linear_solve_writes_csv(self, runner, tmp_path):
        out = tmp_path / "sol.csv"
        result = runner.invoke(main, ["solve", "--feeder", TWOBUS,
                                      "--model", "lp-d-e", "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "bus,phase,vm_pu,va_deg,w_pu"
        assert "load,phase,pd_pu,qd_pu,pb_pu,qb_pu" in lines

    def test_missing_feeder_file_exit_3(self, runner, tmp_path):
        result = runner.invoke(main, ["solve", "--feeder", "/nope.json",
                                      "--model", "lp-d-e",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code == 3

    def test_malformed_json_exit_3(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = runner.invoke(main, ["solve", "--feeder", str(bad),
                                      "--model", "lp-d-e",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code == 3

    def test_invalid_network_exit_3(self, runner, tmp_path):
        doc = json.loads((FEEDER_DIR / "twobus.json").read_text())
        doc["buses"].append({"id": "orphan", "phases": "abc"})
        bad = tmp_path / "invalid.json"
        bad.write_text(json.dumps(doc))
        result = runner.invoke(main, ["solve", "--feeder", str(bad),
                                      "--model", "lp-d-e",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code == 3

    def test_nonconvergence_exit_2(self, runner, tmp_path):
        doc = json.loads((FEEDER_DIR / "twobus.json").read_text())
        doc["loads"][0]["s0_pu"] = [[13.0, 5.0]] * 3
        stress = tmp_path / "stress.json"
        stress.write_text(json.dumps(doc))
        result = runner.invoke(main, ["solve", "--feeder", str(stress),
                                      "--model", "ac-d-e",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code == 2

    def test_phasor_solve(self, runner, tmp_path):
        out = tmp_path / "ac.csv"
        result = runner.invoke(main, ["solve", "--feeder", EIGHTBUS,
                                      "--model", "ac-d-e", "--out", str(out)])
        assert result.exit_code == 0
        assert "va_deg" in out.read_text().splitlines()[0]


class TestCompareCommand:
    def test_writes_records(self, runner, tmp_path):
        out = tmp_path / "cmp.csv"
        result = runner.invoke(main, ["compare", "--feeder", EIGHTBUS,
                                      "--models", "lp-d-e,lp-d",
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "feeder,model,objective,dw_pct,dpb_pct,dqb_pct,iters,ms"
        assert lines[1].startswith("eightbus,lp-d-e,")
        assert len(lines) == 3


class TestSweepCommands:
    def test_exponent(self, runner, tmp_path):
        out = tmp_path / "exp.csv"
        result = runner.invoke(main, [
            "sweep", "exponent", "--feeder", TWOBUS,
            "--from", "0", "--to", "1", "--step", "0.5", "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "alpha,obj_lp,obj_ac"
        assert len(lines) == 4

    def test_vref_descending_range(self, runner, tmp_path):
        out = tmp_path / "vref.csv"
        result = runner.invoke(main, [
            "sweep", "vref", "--feeder", TWOBUS,
            "--from", "1.0", "--to", "0.95", "--step", "0.025", "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "m,dw_pct,converged_lp,converged_ac"
        assert [l.split(",")[0] for l in lines[1:]] == \
            ["1.000000000", "0.975000000", "0.950000000"]

    def test_vuf_deterministic_bytes(self, runner, tmp_path):
        args = ["sweep", "vuf", "--feeder", EIGHTBUS, "--targets", "2,4",
                "--samples", "3", "--seed", "9"]
        out1, out2 = tmp_path / "v1.csv", tmp_path / "v2.csv"
        assert runner.invoke(main, args + ["--out", str(out1)]).exit_code == 0
        assert runner.invoke(main, args + ["--out", str(out2)]).exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert len(out1.read_text().splitlines()) == 1 + 2 * 3 + 2 * 5
