import csv
import json

import pytest

from confsym import cli
from confsym import pipeline as P


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestParsing:
    def test_usage_error_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["verify", "--epsilon", "3"])
        assert exc.value.code == 1

    def test_missing_command(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 1

    @pytest.mark.parametrize("argv", [
        ["verify", "--n", "5", "--gamma", "++"],
        ["verify", "--tol", "codazzi"],
        ["verify", "--tol", "codazzi=abc"],
        ["verify", "--tol", "nonsense=1"],
        ["verify", "--fixture", "torus"],
        ["verify", "--config", "/nonexistent/config.json"],
    ])
    def test_config_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1 and err.startswith("confsym:")

    def test_config_file_with_overrides(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"fixture": "ellipsoid", "n": 6, "gamma": "+-", "tolerances": {"codazzi": 1e-6}}))
        args = cli.build_parser().parse_args(["verify", "--config", str(path), "--n", "5", "--tol", "bianchi=1e-8"])
        cfg = cli.config_from_args(args)
        assert (cfg.fixture, cfg.n, cfg.gamma) == ("ellipsoid", 5, "+")
        assert cfg.tolerances == {"codazzi": 1e-6, "bianchi": 1e-8}


class TestCommands:
    def test_fixtures_list(self, capsys):
        code, out, _ = run(capsys, "fixtures", "list")
        assert code == 0
        assert "sphere" in out and "zpow" in out

    def test_classify_with_csv(self, capsys, tmp_path):
        code, out, _ = run(capsys, "classify", "--fixture", "ellipsoid", "--csv", str(tmp_path / "F.csv"))
        doc = json.loads(out)
        assert code == 0 and doc["stages"]["classify"]["case"] == "d"
        assert doc["stages"]["classify"]["definite"] is True
        with open(tmp_path / "F.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 82 and len(rows[1]) == 5

    def test_solve_tau(self, capsys):
        code, out, _ = run(capsys, "solve-tau", "--fixture", "two-sheeted-hyperboloid", "--epsilon", "-1")
        doc = json.loads(out)
        assert code == 0 and doc["checks"][0]["name"] == "tau_equation"
        assert doc["checks"][0]["residual"] < cli.TAU_TOLERANCE

    def test_build_metric(self, capsys, tmp_path):
        path = tmp_path / "g.json"
        code, _, _ = run(capsys, "build-metric", "--fixture", "sphere", "--n", "5", "--out", str(path))
        doc = json.loads(path.read_text())
        assert code == 0 and doc["signature_ok"]
        assert doc["coords"] == ["y1", "y2", "p1", "p2", "v1"] and len(doc["samples"]) == 25 * 27

    def test_verify_summary(self, capsys):
        code, out, err = run(capsys, "verify", "--fixture", "zpow", "--param", "a=-2", "--n", "6",
                             "--epsilon", "-1", "--gamma", "+-")
        assert code == 0
        assert "overall: pass" in err and "NOT_LOCALLY_SYMMETRIC" in json.loads(out)["flags"]

    def test_verify_failing_tolerance(self, capsys):
        code, _, err = run(capsys, "verify", "--tol", "weyl_size=1e6")
        assert code == 1 and "overall: fail" in err

    def test_report_golden_roundtrip(self, capsys, tmp_path):
        gold, out = tmp_path / "g.json", tmp_path / "r.json"
        code, _, _ = run(capsys, "report", "--fixture", "plane", "--out", str(out), "--write-golden", str(gold))
        assert code == 0
        report = json.loads(out.read_text())
        assert report["stages"]["classify"]["kerb"]["dimension"] == 3
        assert report["flags"][0] == P.EXPECTED_FLAT
        code, _, _ = run(capsys, "report", "--fixture", "plane", "--out", str(out), "--golden", str(gold))
        assert code == 0
        g = json.loads(gold.read_text())
        g["residuals"]["weyl_size"] *= 2
        gold.write_text(json.dumps(g))
        code, _, err = run(capsys, "report", "--fixture", "plane", "--out", str(out), "--golden", str(gold))
        assert code == 1 and "golden: weyl_size" in err

    def test_report_identical_except_timestamp(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "report", "--fixture", "sphere", "--out", str(a))
        run(capsys, "report", "--fixture", "sphere", "--out", str(b))
        da, db = json.loads(a.read_text()), json.loads(b.read_text())
        assert P.dumps(P.strip_timestamp(da)) == P.dumps(P.strip_timestamp(db))
