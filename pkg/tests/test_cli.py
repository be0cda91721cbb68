"""End-to-end tests of the command-line interface.

Commands run in-process through main(argv); each test works inside its own
tmp_path.  Byte-identity assertions compare whole files, PNG figures
included.
"""

import csv
import json
import math
import os

import numpy as np
import pytest

from bfselect.cli import main


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_matrix(path, array, header=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(array):
            writer.writerow([format(float(v), ".17g") for v in row])


def file_map(root):
    out = {}
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.fixture()
def planted(tmp_path):
    out = tmp_path / "data"
    code = run("gen-data", "--n", 120, "--f", 0.1, "--regime", "power:d=0.4",
               "--c1", 40, "--c2", 12, "--seed", 7, "--out", out)
    assert code == 0
    return out


class TestGenData:
    def test_nlogn_truth_size(self, tmp_path):
        out = tmp_path / "g"
        assert run("gen-data", "--n", 1000, "--f", 0.5, "--regime",
                   "nlogn:t=1", "--c1", 40, "--c2", 12, "--seed", 1,
                   "--out", out) == 0
        truth = json.loads((out / "truth.json").read_text())
        assert len(truth["t_model"]) == 144
        assert len(truth["beta"]) == 144
        assert truth["c1_realized"] == pytest.approx(40.0, rel=1e-12)
        with open(out / "X.csv", newline="") as fh:
            first = next(csv.reader(fh))
        assert len(first) == 500
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["seed"] == 1
        assert "out" not in manifest

    def test_seed_drawn_when_omitted(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run("gen-data", "--n", 50, "--f", 0.1, "--regime",
                       "power:d=0.4", "--c1", 20, "--c2", 8, "--out", out) == 0
        s1 = json.loads((out1 / "manifest.json").read_text())["seed"]
        s2 = json.loads((out2 / "manifest.json").read_text())["seed"]
        assert 0 <= s1 < 2 ** 64 and 0 <= s2 < 2 ** 64
        assert s1 != s2


class TestSelect:
    def test_single_column_toy(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 1))
        y = 2.0 * x[:, 0] + 0.1 * rng.standard_normal(10)
        write_matrix(tmp_path / "X.csv", x)
        write_matrix(tmp_path / "y.csv", y.reshape(-1, 1))
        out = tmp_path / "sel"
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--seed", 0, "--out", out) == 0
        rows = read_csv(out / "model_mass.csv")
        assert len(rows) == 2
        assert {row["model"] for row in rows} == {"", "1"}
        assert sum(float(row["mass"]) for row in rows) == pytest.approx(
            1.0, rel=1e-12)

    def test_recovers_planted_map(self, planted, tmp_path):
        out = tmp_path / "sel"
        assert run("select", "--x", planted / "X.csv", "--y",
                   planted / "y.csv", "--lambda", 1.0, "--seed", 3,
                   "--out", out) == 0
        truth = json.loads((planted / "truth.json").read_text())
        map_row = read_csv(out / "map.csv")[0]
        assert map_row["model"] == ";".join(str(k) for k in truth["t_model"])
        probs = read_csv(out / "inclusion.csv")
        assert len(probs) == 12
        included = {int(r["column"]) for r in probs if float(r["probability"]) > 0.5}
        assert included == set(truth["t_model"])

    def test_rerun_from_manifest_is_byte_identical(self, planted, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert run("select", "--x", planted / "X.csv", "--y",
                   planted / "y.csv", "--seed", 3, "--out", out1) == 0
        assert run("select", "--config", out1 / "manifest.json",
                   "--out", out2) == 0
        first, second = file_map(out1), file_map(out2)
        assert set(first) == set(second)
        assert {"model_mass.csv", "inclusion.csv", "map.csv", "manifest.json",
                "inclusion.png", "model_mass.png"} <= set(first)
        for name in first:
            assert first[name] == second[name], f"{name} differs"

    def test_mh_mode_runs_and_is_deterministic(self, planted, tmp_path):
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        for out in (out1, out2):
            assert run("select", "--x", planted / "X.csv", "--y",
                       planted / "y.csv", "--mode", "mh", "--iters", 4000,
                       "--chains", 2, "--seed", 11, "--no-plots",
                       "--out", out) == 0
        assert file_map(out1) == file_map(out2)
        assert not (out1 / "inclusion.png").exists()

    def test_flags_override_config_file(self, planted, tmp_path):
        out1 = tmp_path / "s1"
        assert run("select", "--x", planted / "X.csv", "--y",
                   planted / "y.csv", "--lambda", 1.0, "--seed", 3,
                   "--no-plots", "--out", out1) == 0
        out2 = tmp_path / "s2"
        assert run("select", "--config", out1 / "manifest.json",
                   "--lambda", 0.25, "--out", out2) == 0
        manifest = json.loads((out2 / "manifest.json").read_text())
        assert manifest["lam"] == 0.25
        assert manifest["seed"] == 3


class TestInputErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert run("select", "--x", tmp_path / "no.csv", "--y",
                   tmp_path / "no2.csv", "--out", tmp_path / "o") == 1
        assert "error:" in capsys.readouterr().err

    def test_non_numeric_cell_has_row_context(self, tmp_path, capsys):
        (tmp_path / "X.csv").write_text("1.0,2.0\r\n3.0,oops\r\n5.0,6.0\r\n")
        write_matrix(tmp_path / "y.csv", np.ones((3, 1)))
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--out", tmp_path / "o") == 1
        err = capsys.readouterr().err
        assert "row 2" in err and "column 2" in err

    def test_dimension_mismatch(self, tmp_path):
        write_matrix(tmp_path / "X.csv", np.ones((4, 2)))
        write_matrix(tmp_path / "y.csv", np.ones((5, 1)))
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--out", tmp_path / "o") == 1

    def test_wide_y_rejected(self, tmp_path):
        write_matrix(tmp_path / "X.csv", np.eye(4))
        write_matrix(tmp_path / "y.csv", np.ones((4, 2)))
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--out", tmp_path / "o") == 1

    def test_unknown_flag_and_missing_command(self):
        assert run("select", "--bogus") == 1
        assert main([]) == 1

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"c": 2, "m": 100, "bogus": 1}))
        assert run("stable-sim", "--config", cfg, "--out", tmp_path / "o") == 1

    def test_config_command_mismatch(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"command": "select", "c": 2, "m": 100}))
        assert run("stable-sim", "--config", cfg, "--out", tmp_path / "o") == 1

    def test_missing_required_flag(self, capsys):
        assert run("stable-sim", "--c", 2, "--out", "/tmp/nowhere") == 1
        assert "--m" in capsys.readouterr().err

    def test_header_row_is_accepted(self, tmp_path):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((12, 2))
        write_matrix(tmp_path / "X.csv", x, header=["a", "b"])
        write_matrix(tmp_path / "y.csv", x[:, :1])
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--no-plots",
                   "--out", tmp_path / "o") == 0


class TestErrorExitCodes:
    def test_budget_exceeded_is_exit_3(self, tmp_path):
        rng = np.random.default_rng(2)
        write_matrix(tmp_path / "X.csv", rng.standard_normal((30, 26)))
        write_matrix(tmp_path / "y.csv", rng.standard_normal((30, 1)))
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--mode", "enumerate",
                   "--out", tmp_path / "o") == 3

    def test_numeric_failure_is_exit_2(self, tmp_path):
        rng = np.random.default_rng(3)
        write_matrix(tmp_path / "X.csv", rng.standard_normal((10, 2)))
        write_matrix(tmp_path / "y.csv", np.ones((10, 1)))
        assert run("select", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--out", tmp_path / "o") == 2

    def test_rank_deficient_member_gets_zero_mass_not_a_crash(self, tmp_path):
        rng = np.random.default_rng(3)
        col = rng.standard_normal((10, 1))
        write_matrix(tmp_path / "X.csv", np.hstack([col, col]))
        write_matrix(tmp_path / "y.csv", rng.standard_normal((10, 1)))
        with pytest.warns(UserWarning, match="rank deficient"):
            assert run("select", "--x", tmp_path / "X.csv", "--y",
                       tmp_path / "y.csv", "--no-plots",
                       "--out", tmp_path / "o") == 0


class TestDiagnose:
    def test_orthogonal_design(self, tmp_path, capsys):
        n = 8
        base = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]] * 2, dtype=float)
        write_matrix(tmp_path / "X.csv", base)
        write_matrix(tmp_path / "y.csv", np.arange(n, dtype=float).reshape(-1, 1))
        out = tmp_path / "d"
        assert run("diagnose", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--mc-draws", 150, "--seed", 0,
                   "--out", out) == 0
        text = (out / "diagnostics.txt").read_text()
        assert "standardization_ok = true" in text
        assert "zeta_min_hat = 1" in text

    def test_duplicated_column_flags_zero_eigenvalue(self, tmp_path):
        rng = np.random.default_rng(4)
        col = rng.standard_normal((12, 1))
        write_matrix(tmp_path / "X.csv", np.hstack([col, col]))
        write_matrix(tmp_path / "y.csv", rng.standard_normal((12, 1)))
        out = tmp_path / "d"
        assert run("diagnose", "--x", tmp_path / "X.csv", "--y",
                   tmp_path / "y.csv", "--mc-draws", 150, "--seed", 0,
                   "--out", out) == 0
        text = (out / "diagnostics.txt").read_text()
        assert "zeta_min_hat = 0\n" in text

    def test_truth_file_populates_signal_checks(self, planted, tmp_path):
        out = tmp_path / "d"
        assert run("diagnose", "--x", planted / "X.csv", "--y",
                   planted / "y.csv", "--truth", planted / "truth.json",
                   "--mc-draws", 150, "--seed", 2, "--out", out) == 0
        text = (out / "diagnostics.txt").read_text()
        for key in ("c1_hat", "tau", "c2_implied", "c2_threshold",
                    "signal_condition_ok"):
            assert f"{key} = " in text
        assert "standardization_ok = true" in text


class TestConsistency:
    GRID_ARGS = ("consistency", "--n-grid", "80,240", "--seeds", 2, "--f",
                 0.05, "--regime", "power:d=0.4", "--c1", 40, "--c2", 12,
                 "--seed", 5)

    def test_failed_cells_and_resume_byte_identity(self, tmp_path):
        full = tmp_path / "full"
        assert run(*self.GRID_ARGS, "--out", full) == 0
        cells = read_csv(full / "cells.csv")
        assert [row["status"] for row in cells] == ["failed"] * 2 + ["ok"] * 2
        assert all(row["error"] for row in cells if row["status"] == "failed")

        resumed = tmp_path / "resumed"
        resumed.mkdir()
        with open(full / "cells.csv", "rb") as fh:
            lines = fh.read().splitlines(keepends=True)
        (resumed / "cells.csv").write_bytes(b"".join(lines[:3]))
        assert run(*self.GRID_ARGS, "--resume", "--out", resumed) == 0
        first, second = file_map(full), file_map(resumed)
        assert set(first) == set(second)
        for name in first:
            assert first[name] == second[name], f"{name} differs"

    def test_curve_long_format(self, tmp_path):
        out = tmp_path / "c"
        assert run(*self.GRID_ARGS, "--no-plots", "--out", out) == 0
        rows = read_csv(out / "curve.csv")
        stats = {row["statistic"] for row in rows}
        assert stats == {"median_posterior", "recovery_rate",
                         "floor_quarter_rate", "floor_zeta_rate"}
        assert len(rows) == 8
        by_key = {(row["n"], row["statistic"]): row["value"] for row in rows}
        assert by_key[("80", "median_posterior")] == "nan"
        assert float(by_key[("240", "median_posterior")]) > 0.5


class TestOverfitClass:
    def test_outputs(self, tmp_path):
        out = tmp_path / "oc"
        assert run("overfit-class", "--c", 1, "--n", 300, "--f", 0.2,
                   "--regime", "power:d=0.4", "--c1", 40, "--c2", 12,
                   "--seed", 2, "--out", out) == 0
        summary = read_csv(out / "summary.csv")[0]
        assert summary["exact"] == "true"
        members = read_csv(out / "members.csv")
        assert len(members) == int(summary["class_count"])
        assert float(summary["h_stat"]) > 0
        assert (out / "members.png").exists()


class TestStableSim:
    def test_outputs_and_manifest_rerun(self, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert run("stable-sim", "--c", 2, "--m", 10000, "--replicates", 500,
                   "--seed", 4, "--out", out1) == 0
        stats = read_csv(out1 / "stats.csv")[0]
        assert float(stats["ks_beta1"]) <= 0.1
        assert float(stats["ks_beta0"]) > float(stats["ks_beta1"])
        assert 0.5 <= float(stats["hill_estimate"]) <= 1.5
        hist = read_csv(out1 / "histogram.csv")
        assert sum(int(row["count"]) for row in hist) == 500
        assert len({row["ks_beta1"] for row in hist}) == 1
        assert run("stable-sim", "--config", out1 / "manifest.json",
                   "--out", out2) == 0
        assert file_map(out1) == file_map(out2)

    def test_json_config_without_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"c": 1, "m": 500, "replicates": 40,
                                   "seed": 9}))
        out = tmp_path / "s"
        assert run("stable-sim", "--config", cfg, "--no-plots",
                   "--out", out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["c"] == 1 and manifest["replicates"] == 40
        sums = read_csv(out / "sums.csv")
        assert len(sums) == 40
