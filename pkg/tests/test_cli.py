import json
import os
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from plsim.cli import main, parse_args


@pytest.fixture()
def tiny_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 60
    z1, z2 = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    x1 = rng.normal(size=n)
    y = np.sin(2 * (0.6 * z1 + 0.8 * z2)) + 0.5 * x1 + 0.1 * rng.normal(size=n)
    path = tmp_path / "d.csv"
    pd.DataFrame({"y": y, "z1": z1, "z2": z2, "x1": x1}).to_csv(path, index=False)
    return str(path)


def run_cli(args):
    """Run in-process, capturing stderr text and exit code."""
    import io
    from contextlib import redirect_stderr, redirect_stdout

    err, out = io.StringIO(), io.StringIO()
    with redirect_stderr(err), redirect_stdout(out):
        try:
            code = main(args)
        except SystemExit as exc:  # argparse usage errors
            code = exc.code
    return code, out.getvalue(), err.getvalue()


class TestParse:
    def test_fit_config(self):
        cfg = parse_args(["fit", "--data", "d.csv", "--y", "y", "--z",
                          "z1,z2", "--x", "x1", "--out", "f.json"])
        assert cfg.command == "fit"
        assert cfg.z == "z1,z2"

    def test_missing_required_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            parse_args(["fit"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            parse_args(["fit", "--data", "d.csv", "--frobnicate", "1"])
        assert exc.value.code == 2

    def test_conflicting_bandwidth_flags(self):
        with pytest.raises(SystemExit) as exc:
            parse_args(["fit", "--data", "d", "--y", "y", "--z", "a",
                        "--out", "o", "--bandwidth", "0.3",
                        "--bandwidth-grid", "0.1:0.5:10"])
        assert exc.value.code == 2

    def test_simulate_config_repeatable(self):
        argv = ["simulate", "--example", "2i", "--seed", "7", "--out", "r.json"]
        c1, c2 = parse_args(argv), parse_args(argv)
        assert c1.command == c2.command == "simulate"
        assert c1.options == c2.options

    def test_version_flag(self):
        cfg = parse_args(["--version"])
        assert cfg.command == "version"


class TestCommands:
    def test_fit_roundtrip(self, tiny_csv, tmp_path):
        out = str(tmp_path / "fit.json")
        code, _, err = run_cli(["fit", "--data", tiny_csv, "--y", "y",
                                "--z", "z1,z2", "--x", "x1", "--out", out])
        assert code == 0, err
        doc = json.loads(open(out).read())
        assert len(doc["alpha"]) == 2
        assert len(doc["beta"]) == 1
        assert doc["convergence"]["converged"] is True
        assert abs(np.linalg.norm(doc["alpha"]) - 1) < 1e-10

    def test_fit_idempotent_bytes(self, tiny_csv, tmp_path):
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        for out in (out1, out2):
            code, _, _ = run_cli(["fit", "--data", tiny_csv, "--y", "y",
                                  "--z", "z1,z2", "--x", "x1", "--out", out])
            assert code == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_nan_dataset_errors_with_json(self, tiny_csv, tmp_path):
        df = pd.read_csv(tiny_csv)
        df.loc[4, "z1"] = np.nan
        bad = str(tmp_path / "bad.csv")
        df.to_csv(bad, index=False)
        out = str(tmp_path / "f.json")
        code, _, err = run_cli(["fit", "--data", bad, "--y", "y",
                                "--z", "z1,z2", "--x", "x1", "--out", out])
        assert code == 1
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["code"] == "NonFiniteValue"
        assert payload["row"] == 4
        assert payload["col"] == "z1"
        assert not os.path.exists(out)

    def test_allow_partial_writes_fit(self, tiny_csv, tmp_path):
        out = str(tmp_path / "p.json")
        code, _, err = run_cli(["fit", "--data", tiny_csv, "--y", "y",
                                "--z", "z1,z2", "--x", "x1", "--out", out,
                                "--max-iter", "1", "--tol", "1e-14",
                                "--allow-partial"])
        assert code == 1
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["code"] == "NoConvergence"
        doc = json.loads(open(out).read())
        assert doc["convergence"]["converged"] is False

    def test_select_command(self, tiny_csv, tmp_path):
        out = str(tmp_path / "sel.json")
        code, _, err = run_cli(["select", "--data", tiny_csv, "--y", "y",
                                "--z", "z1,z2", "--x", "x1", "--grid", "8",
                                "--out", out])
        assert code == 0, err
        doc = json.loads(open(out).read())
        assert doc["criterion"] == "bic"
        assert len(doc["path"]) == 8
        assert "unpenalized" in doc

    def test_test_linear_command(self, tiny_csv, tmp_path):
        a = str(tmp_path / "A.csv")
        d = str(tmp_path / "delta.csv")
        np.savetxt(a, np.array([[0.0, 0.0, 1.0]]), delimiter=",")
        np.savetxt(d, np.array([0.0]), delimiter=",")
        code, out, err = run_cli(["test", "linear", "--data", tiny_csv,
                                  "--y", "y", "--z", "z1,z2", "--x", "x1",
                                  "--A", a, "--delta", d])
        assert code == 0, err
        doc = json.loads(out.strip().splitlines()[-1])
        assert doc["method"] == "T1"
        assert doc["df"] == 1.0
        assert 0 <= doc["p_value"] <= 1
        # beta = 0.5 is far from 0: should reject
        assert doc["p_value"] < 0.01

    def test_test_linear_wald(self, tiny_csv, tmp_path):
        a = str(tmp_path / "A.csv")
        d = str(tmp_path / "delta.csv")
        np.savetxt(a, np.array([[0.0, 0.0, 1.0]]), delimiter=",")
        np.savetxt(d, np.array([0.0]), delimiter=",")
        code, out, _ = run_cli(["test", "linear", "--data", tiny_csv,
                                "--y", "y", "--z", "z1,z2", "--x", "x1",
                                "--A", a, "--delta", d, "--method", "wald"])
        assert code == 0
        doc = json.loads(out.strip().splitlines()[-1])
        assert doc["method"] == "Wald"

    def test_test_link_command(self, tiny_csv):
        code, out, err = run_cli(["test", "link", "--data", tiny_csv,
                                  "--y", "y", "--z", "z1,z2", "--x", "x1"])
        assert code == 0, err
        doc = json.loads(out.strip().splitlines()[-1])
        assert doc["method"] == "T2"
        assert doc["df"] > 0

    def test_test_requires_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            parse_args(["test", "--data", "d.csv"])
        assert exc.value.code == 2

    def test_bandwidth_command(self, tiny_csv, tmp_path):
        out = str(tmp_path / "bw.json")
        code, _, err = run_cli(["bandwidth", "--data", tiny_csv, "--y", "y",
                                "--z", "z1,z2", "--x", "x1", "--out", out])
        assert code == 0, err
        doc = json.loads(open(out).read())
        assert doc["selected_h"] > 0
        assert len(doc["grid"]) == 20

    def test_version_output(self):
        code, out, _ = run_cli(["--version"])
        assert code == 0
        assert "triweight" in out
        assert "1.09375" in out.replace("1.093750", "1.09375")

    def test_simulate_power_csv(self, tmp_path):
        out = str(tmp_path / "r.json")
        csv = str(tmp_path / "curve.csv")
        code, _, err = run_cli(["simulate", "--example", "4", "--n", "60",
                                "--reps", "3", "--seed", "1", "--c-grid",
                                "0,0.3", "--threads", "1", "--out", out,
                                "--power-csv", csv])
        assert code == 0, err
        lines = open(csv).read().strip().splitlines()
        assert lines[0] == "c,rejection_rate"
        assert len(lines) == 3

    def test_simulate_deterministic_bytes(self, tmp_path):
        args = ["simulate", "--example", "1a", "--n", "50", "--reps", "3",
                "--seed", "5", "--deterministic", "--threads", "1"]
        f1, f2 = str(tmp_path / "r1.json"), str(tmp_path / "r2.json")
        assert run_cli(args + ["--out", f1])[0] == 0
        assert run_cli(args + ["--out", f2])[0] == 0
        assert open(f1, "rb").read() == open(f2, "rb").read()


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run([sys.executable, "-m", "plsim.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "plsim" in proc.stdout
