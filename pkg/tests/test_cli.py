import json

import pytest

from coagfrag.cli import main

GOOD = """
[weight]
kind = "power"
p = 1.0
[frag]
family = "becker_doring"
[coag]
family = "constant"
scale = 1.0
[truncation]
N = 24
[solver]
T = 0.25
[output]
points = 4
stride = 8
"""

UNVERIFIED = """
[coag]
family = "product_capped"
scale = 1.0
cap = 1e12
[truncation]
N = 16
[solver]
T = 0.1
"""

COLLAPSING = """
[coag]
family = "constant"
scale = 2.0
[truncation]
N = 16
[solver]
T = 1.0
delta_min = 0.2
[initial]
sizes = [1]
amounts = [4.0]
"""


@pytest.fixture
def good_cfg(tmp_path):
    path = tmp_path / "good.toml"
    path.write_text(GOOD)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVerify:
    def test_verified_scenario(self, good_cfg, capsys):
        code, out, _ = run(capsys, "verify", "--config", good_cfg)
        assert code == 0
        doc = json.loads(out)
        assert doc["verified"] is True
        assert doc["case"] in ("CI", "CII")

    def test_unverified_scenario_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text(UNVERIFIED)
        code, out, _ = run(capsys, "verify", "--config", str(path))
        assert code == 2
        doc = json.loads(out)
        assert doc["verified"] is False
        assert doc["reasons"]

    def test_missing_config_exits_1(self, tmp_path, capsys):
        code, _, err = run(capsys, "verify", "--config",
                           str(tmp_path / "nope.toml"))
        assert code == 1
        assert "error" in err


class TestSimulate:
    def test_csv_export_and_summary_sidecar(self, good_cfg, tmp_path, capsys):
        out_path = tmp_path / "traj.csv"
        code, _, _ = run(capsys, "simulate", "--config", good_cfg,
                         "--out", str(out_path))
        assert code == 0
        lines = out_path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:8] == ["t", "M0", "M1", "norm_w", "norm_wtilde",
                              "leakage", "min_component", "picard_iters"]
        # stride 8 on N = 24 exports u_1, u_9, u_17
        assert header[8:] == ["u_1", "u_9", "u_17"]
        assert len(lines) == 1 + 5  # t = 0 plus four output points
        summary = json.loads((tmp_path / "traj.csv.summary.json").read_text())
        assert summary["engine"] == "picard"
        assert summary["blowup"] is None
        assert summary["final_time"] == 0.25

    def test_deterministic_bytes(self, good_cfg, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        run(capsys, "simulate", "--config", good_cfg, "--out", str(a))
        run(capsys, "simulate", "--config", good_cfg, "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_json_format(self, tmp_path, capsys):
        path = tmp_path / "run.toml"
        path.write_text(GOOD.replace('stride = 8',
                                     'stride = 8\nformat = "json"'))
        out_path = tmp_path / "traj.json"
        code, _, _ = run(capsys, "simulate", "--config", str(path),
                         "--out", str(out_path))
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert set(doc) == {"columns", "rows", "summary"}
        assert doc["columns"][0] == "t"
        assert len(doc["rows"]) == 5

    def test_stdout_when_no_path(self, good_cfg, capsys):
        code, out, _ = run(capsys, "simulate", "--config", good_cfg)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("t,M0,M1,")
        start = next(i for i, ln in enumerate(lines) if ln.startswith("{"))
        summary = json.loads("\n".join(lines[start:]))
        assert summary["engine"] == "picard"

    def test_oracle_engine(self, good_cfg, tmp_path, capsys):
        out_path = tmp_path / "o.csv"
        code, _, _ = run(capsys, "simulate", "--config", good_cfg,
                         "--engine", "oracle", "--out", str(out_path))
        assert code == 0
        summary = json.loads((tmp_path / "o.csv.summary.json").read_text())
        assert summary["engine"] == "oracle"
        # oracle rows never report fixed-point iteration counts
        body = out_path.read_text().strip().splitlines()[1:]
        assert all(row.split(",")[7] == "" for row in body)

    def test_both_engines_write_pair_and_diff(self, good_cfg, tmp_path,
                                              capsys):
        out_path = tmp_path / "cmp.csv"
        code, out, _ = run(capsys, "simulate", "--config", good_cfg,
                           "--engine", "both", "--out", str(out_path))
        assert code == 0
        diff = json.loads(out)
        assert diff["discrepancy_norm_w"] < 1e-6
        assert (tmp_path / "cmp.picard.csv").exists()
        assert (tmp_path / "cmp.oracle.csv").exists()
        assert diff["blowup"] == {"picard": False, "oracle": False}

    def test_both_engines_need_out_path(self, good_cfg, capsys):
        code, _, err = run(capsys, "simulate", "--config", good_cfg,
                           "--engine", "both")
        assert code == 1
        assert "output path" in err

    def test_unverified_needs_force(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text(UNVERIFIED)
        code, _, err = run(capsys, "simulate", "--config", str(path))
        assert code == 2
        assert "--force" in err
        # forced run proceeds (capped kernel, short horizon: no blowup)
        code, out, _ = run(capsys, "simulate", "--config", str(path),
                           "--force")
        assert code == 0

    def test_blowup_exits_3(self, tmp_path, capsys):
        path = tmp_path / "collapse.toml"
        path.write_text(COLLAPSING)
        out_path = tmp_path / "c.csv"
        code, _, _ = run(capsys, "simulate", "--config", str(path),
                         "--out", str(out_path))
        assert code == 3
        summary = json.loads((tmp_path / "c.csv.summary.json").read_text())
        assert summary["blowup"]["reason"] == "window length collapsed"


class TestAudit:
    def test_default_audit_set_passes(self, good_cfg, capsys):
        code, out, _ = run(capsys, "audit", "--config", good_cfg)
        assert code == 0
        doc = json.loads(out)
        assert doc["all_pass"] is True
        kinds = [a["ref"] for a in doc["audits"]]
        assert kinds == ["mass-ledger", "positivity-floor", "convexity-gap",
                         "window-contraction"]

    def test_seed_override_recorded(self, good_cfg, capsys):
        code, out, _ = run(capsys, "audit", "--config", good_cfg,
                           "--seed", "99")
        assert code == 0
        assert json.loads(out)["seed"] == 99

    def test_exported_trajectory_roundtrip(self, good_cfg, tmp_path, capsys):
        out_path = tmp_path / "traj.csv"
        run(capsys, "simulate", "--config", good_cfg, "--out", str(out_path))
        cfg = tmp_path / "audit.toml"
        cfg.write_text(GOOD + '\n[[audits]]\nkind = "mass-ledger"\n'
                              '\n[[audits]]\nkind = "positivity-floor"\n')
        code, out, _ = run(capsys, "audit", "--config", str(cfg),
                           "--trajectory", str(out_path))
        assert code == 0
        assert json.loads(out)["all_pass"] is True

    def test_corrupted_table_fails_exit_4(self, tmp_path, capsys):
        table = tmp_path / "fake.csv"
        table.write_text(
            "t,M0,M1,norm_w,norm_wtilde,leakage,min_component,picard_iters\n"
            "0,1,1,1,1,0,0,\n"
            "0.5,1,1.1,1.1,1.1,0,0,\n")
        cfg = tmp_path / "audit.toml"
        cfg.write_text(GOOD + '\n[[audits]]\nkind = "mass-ledger"\n')
        code, out, _ = run(capsys, "audit", "--config", str(cfg),
                           "--trajectory", str(table))
        assert code == 4
        doc = json.loads(out)
        assert doc["all_pass"] is False
        assert doc["audits"][0]["status"] == "fail"

    def test_negative_density_fails_positivity(self, tmp_path, capsys):
        table = tmp_path / "neg.csv"
        table.write_text(
            "t,M0,M1,norm_w,norm_wtilde,leakage,min_component,picard_iters\n"
            "0,1,1,1,1,0,0,\n"
            "0.5,1,1,1,1,0,-1e-3,\n")
        cfg = tmp_path / "audit.toml"
        cfg.write_text(GOOD + '\n[[audits]]\nkind = "positivity-floor"\n')
        code, out, _ = run(capsys, "audit", "--config", str(cfg),
                           "--trajectory", str(table))
        assert code == 4
        assert json.loads(out)["audits"][0]["ref"] == "positivity-floor"

    def test_table_missing_column_exits_1(self, tmp_path, capsys):
        table = tmp_path / "short.csv"
        table.write_text("t,M0\n0,1\n")
        cfg = tmp_path / "audit.toml"
        cfg.write_text(GOOD + '\n[[audits]]\nkind = "mass-ledger"\n')
        code, _, err = run(capsys, "audit", "--config", str(cfg),
                           "--trajectory", str(table))
        assert code == 1
        assert "missing column" in err


class TestSerialization:
    def test_g17_roundtrips_doubles_exactly(self):
        from coagfrag.cli import _g17
        vals = [1.0 / 3.0, 1e-300, 5.373e-14, 0.1 + 0.2, 2.0 ** -52,
                123456.789e10, 0.0]
        for v in vals:
            assert float(_g17(v)) == v


class TestSweepAndCompare:
    def test_sweep_records(self, good_cfg, capsys):
        code, out, _ = run(capsys, "sweep", "--config", good_cfg,
                           "--sizes", "8,16")
        assert code == 0
        doc = json.loads(out)
        assert [r["N"] for r in doc["records"]] == [8, 16]
        assert "distance_to_previous" in doc["records"][1]
        assert "final" not in doc["records"][0]

    def test_sweep_without_sizes_exits_1(self, good_cfg, capsys):
        code, _, err = run(capsys, "sweep", "--config", good_cfg)
        assert code == 1
        assert "sizes" in err

    def test_sweep_blowup_exits_3(self, tmp_path, capsys):
        path = tmp_path / "collapse.toml"
        path.write_text(COLLAPSING)
        code, _, _ = run(capsys, "sweep", "--config", str(path),
                         "--sizes", "8,16")
        assert code == 3

    def test_compare_engines(self, good_cfg, capsys):
        code, out, _ = run(capsys, "compare", "--config", good_cfg)
        assert code == 0
        doc = json.loads(out)
        assert doc["pass"] is True
        assert doc["discrepancy_norm_w"] < 1e-6

    def test_compare_impossible_tolerance_exits_4(self, good_cfg, capsys):
        code, out, _ = run(capsys, "compare", "--config", good_cfg,
                           "--tol", "1e-18")
        assert code == 4
        assert json.loads(out)["pass"] is False
