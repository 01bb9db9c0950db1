import filecmp
import json
import os

import numpy as np
import pytest

from astral.cli import main, read_csv, write_csv


def _dirs_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.diff_files or cmp.left_only or cmp.right_only:
        return False
    for sub in cmp.common_dirs:
        if not _dirs_equal(os.path.join(a, sub), os.path.join(b, sub)):
            return False
    # dircmp is shallow; compare bytes
    for f in cmp.common_files:
        with open(os.path.join(a, f), "rb") as fa, open(os.path.join(b, f), "rb") as fb:
            if fa.read() != fb.read():
                return False
    return True


class TestGen:
    def test_deterministic_directories(self, tmp_path):
        d1, d2 = str(tmp_path / "d1"), str(tmp_path / "d2")
        args = ["gen", "--family", "disc_o", "--J", "4", "--n", "4", "--seed", "7"]
        assert main(args + ["--out", d1]) == 0
        assert main(args + ["--out", d2]) == 0
        assert _dirs_equal(d1, d2)

    def test_unknown_family_exit_2(self, tmp_path):
        code = main(["gen", "--family", "bogus", "--J", "4", "--n", "1",
                     "--seed", "0", "--out", str(tmp_path / "d")])
        assert code == 2

    def test_unknown_config_key_exit_2(self, tmp_path):
        code = main(["gen", "--family", "disc_o", "--J", "4", "--n", "1",
                     "--seed", "0", "--out", str(tmp_path / "d"),
                     "--set", "typo_key=1"])
        assert code == 2

    def test_config_echoed(self, tmp_path):
        out = str(tmp_path / "d")
        main(["gen", "--family", "1d_2", "--J", "4", "--n", "2", "--seed", "1", "--out", out])
        echoed = json.load(open(os.path.join(out, "config.json")))
        assert echoed["command"] == "gen"
        assert echoed["config"]["family"] == "1d_2"

    def test_convdiff_options(self, tmp_path):
        out = str(tmp_path / "d")
        code = main(["gen", "--family", "convdiff", "--J", "4", "--n", "2",
                     "--seed", "3", "--out", out,
                     "--set", "time_extent=0.5", "--set", "n_modes=2"])
        assert code == 0
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["time_extent"] == 0.5


class TestSolveCertify:
    @pytest.fixture()
    def solved_dataset(self, tmp_path):
        out = str(tmp_path / "d")
        assert main(["gen", "--family", "disc_o", "--J", "4", "--n", "3",
                     "--seed", "11", "--out", out]) == 0
        assert main(["solve", "--data", out, "--j-ref", "6"]) == 0
        return out

    def test_solve_appends_solutions(self, solved_dataset):
        manifest = json.load(open(os.path.join(solved_dataset, "manifest.json")))
        assert "u_coarse" in manifest["arrays"]
        assert "u_ref" in manifest["arrays"]

    def test_certify_bounds_dominate_errors(self, solved_dataset):
        assert main(["certify", "--data", solved_dataset]) == 0
        rows = read_csv(os.path.join(solved_dataset, "certify_metrics.csv"))
        per_sample = rows[:-1]
        for row in per_sample:
            assert float(row["e_ub_train"]) >= float(row["e_train"])
        manifest = json.load(open(os.path.join(solved_dataset, "manifest.json")))
        assert "cert_y1" in manifest["arrays"]
        assert "cert_beta" in manifest["arrays"]

    def test_certify_without_solve_exit_2(self, tmp_path):
        out = str(tmp_path / "d")
        main(["gen", "--family", "disc_o", "--J", "4", "--n", "1", "--seed", "2", "--out", out])
        assert main(["certify", "--data", out]) == 2


class TestCsv:
    def test_deterministic_format(self, tmp_path):
        path = str(tmp_path / "m.csv")
        rows = [{"equation": "eq", "n_train": 2, "e_train": 1.0 / 3.0}]
        write_csv(path, ("equation", "n_train", "e_train"), rows)
        text = open(path, "rb").read().decode()
        assert "\r" not in text
        assert "3.33333333e-01" in text

    def test_report_ordering(self, tmp_path):
        m1 = str(tmp_path / "m1.csv")
        m2 = str(tmp_path / "m2.csv")
        cols = ("equation", "n_train", "e_train", "e_test", "e_ub_train", "e_ub_test",
                "r_ub_train", "r_ub_test", "corr_train", "corr_test")
        write_csv(m1, cols, [
            {"equation": "smooth_o", "n_train": 400, "e_train": 0.2},
            {"equation": "disc_o", "n_train": 200, "e_train": 0.3},
        ])
        write_csv(m2, cols, [{"equation": "disc_o", "n_train": 100, "e_train": 0.1}])
        out = str(tmp_path / "table.csv")
        assert main(["report", "--inputs", m1, m2, "--out", out]) == 0
        rows = read_csv(out)
        keys = [(r["equation"], int(r["n_train"])) for r in rows]
        assert keys == sorted(keys)

    def test_report_stable_under_input_order(self, tmp_path):
        cols = ("equation", "n_train", "e_train", "e_test", "e_ub_train", "e_ub_test",
                "r_ub_train", "r_ub_test", "corr_train", "corr_test")
        m1 = str(tmp_path / "m1.csv")
        m2 = str(tmp_path / "m2.csv")
        write_csv(m1, cols, [{"equation": "a", "n_train": 1, "e_train": 0.5}])
        write_csv(m2, cols, [{"equation": "b", "n_train": 1, "e_train": 0.6}])
        out1, out2 = str(tmp_path / "t1.csv"), str(tmp_path / "t2.csv")
        main(["report", "--inputs", m1, m2, "--out", out1])
        main(["report", "--inputs", m2, m1, "--out", out2])
        assert open(out1).read() == open(out2).read()


class TestTrainCommands:
    def test_train_pinn_tiny(self, tmp_path):
        out = str(tmp_path / "run")
        code = main(["train-pinn", "--seed", "0", "--out", out,
                     "--set", "epochs=4", "--set", "J=4", "--set", "log_period=2",
                     "--set", "gauss_n=4"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "trace.csv"))
        assert os.path.exists(os.path.join(out, "checkpoint", "manifest.json"))

    def test_train_op_tiny(self, tmp_path):
        train_d = str(tmp_path / "train")
        test_d = str(tmp_path / "test")
        for d, seed in ((train_d, 1), (test_d, 2)):
            main(["gen", "--family", "1d_2", "--J", "4", "--n", "6", "--seed", str(seed), "--out", d])
            main(["solve", "--data", d, "--j-ref", "6"])
        out = str(tmp_path / "run")
        code = main(["train-op", "--train", train_d, "--test", test_d,
                     "--scheme", "unsupervised", "--seed", "0", "--out", out,
                     "--set", "epochs=20", "--set", "width=16", "--set", "depth=2",
                     "--set", "decay_start=10", "--set", "decay_period=5"])
        assert code == 0
        rows = read_csv(os.path.join(out, "metrics.csv"))
        assert rows and rows[0]["equation"] == "1d_2"
        per = read_csv(os.path.join(out, "per_sample.csv"))
        for row in per:
            assert float(row["e_ub_test"]) >= 0.98 * float(row["e_test"])
