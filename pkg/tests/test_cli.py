import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from poissonbec.cli import UsageError, execute, main, parse_and_validate


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    inv = parse_and_validate(argv)
    code = execute(inv, out, err)
    return code, out.getvalue(), err.getvalue()


class TestParse:
    def test_sample(self):
        inv = parse_and_validate(["sample", "--rate", "1", "--box-length", "100", "--seed", "7"])
        assert inv.subcommand == "sample" and inv.flags["seed"] == 7

    def test_experiment(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("[run]\ntrials = 4\nsizes = 50\n")
        inv = parse_and_validate(["experiment", "gap-law", "--config", str(cfg), "--threads", "8"])
        assert inv.flags["config"].kind == "gap_law"
        assert inv.flags["config"].trials == 4
        assert inv.flags["threads"] == 8

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("[run]\ntrials = 4\nseed = 1\n")
        inv = parse_and_validate(["experiment", "gap-law", "--config", str(cfg), "--trials", "9",
                                  "--seed", "5"])
        assert inv.flags["config"].trials == 9 and inv.flags["config"].seed == 5

    @pytest.mark.parametrize("argv", [
        ["experiment", "bogus-kind"],
        ["sample", "--rate", "1"],
        ["sample", "--rate", "1", "--box-length", "1", "--seed", "1", "--colour", "red"],
        [],
        ["occupancy", "--box-length", "1", "--density", "1", "--beta", "1"],
        ["experiment", "gap-law", "--threads", "0"],
    ])
    def test_usage_errors(self, argv):
        with pytest.raises(UsageError):
            parse_and_validate(argv)

    def test_malformed_config_names_line(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("[run]\ntrials = 4\nbogus = 1\n")
        with pytest.raises(UsageError, match=":3:"):
            parse_and_validate(["experiment", "gap-law", "--config", str(cfg)])

    def test_main_exit_code(self, capsys):
        assert main(["experiment", "bogus-kind"]) == 2
        assert "bogus-kind" in capsys.readouterr().err


class TestExecute:
    def test_sample_csv(self):
        code, out, _ = run(["sample", "--rate", "1", "--box-length", "20", "--seed", "7"])
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "record,index,value"
        kinds = [line.split(",")[0] for line in lines[1:]]
        atoms, gaps = kinds.count("atom"), kinds.count("gap")
        assert gaps == atoms + 1 == kinds.count("ranked_gap")
        gap_values = [float(line.split(",")[2]) for line in lines[1:] if line.startswith("gap,")]
        assert sum(gap_values) == pytest.approx(20.0)

    def test_spectrum_free(self):
        code, out, _ = run(["spectrum", "--rate", "1", "--box-length", repr(math.pi), "--seed", "1",
                            "--strength", "0", "--k", "1"])
        assert code == 0
        assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(1.0, rel=1e-3)

    def test_occupancy_single_level(self):
        code, out, _ = run(["occupancy", "--energies", "1", "--box-length", "1", "--density", "1",
                            "--beta", "1"])
        assert code == 0
        mu = float(out.splitlines()[0].split(",")[1])
        assert mu == pytest.approx(1 - math.log(2), abs=1e-10)

    def test_occupancy_realisation(self):
        code, out, _ = run(["occupancy", "--rate", "1", "--seed", "3", "--box-length", "200",
                            "--density", "0.5", "--beta", "1"])
        assert code == 0
        assert float(out.splitlines()[1].split(",")[1]) <= 1e-10

    def test_numerical_failure_exit(self):
        code, out, err = run(["spectrum", "--rate", "1", "--box-length", "5", "--seed", "2",
                              "--k", "1", "--tol", "1e-300"])
        assert code == 1 and out == ""
        assert "seed 2" in err

    def test_invalid_parameter_exit(self):
        code, _, err = run(["sample", "--rate", "-1", "--box-length", "5", "--seed", "2"])
        assert code == 2 and "rate" in err

    def test_deterministic(self):
        argv = ["spectrum", "--rate", "1", "--box-length", "60", "--seed", "9", "--strength", "5"]
        assert run(argv)[1] == run(argv)[1]

    def test_experiment_writes_report(self, tmp_path):
        code, out, _ = run(["experiment", "gap-law", "--out-dir", str(tmp_path), "--trials", "5",
                            "--threads", "2"])
        assert code == 0
        path = Path(out.strip())
        assert path.name == "summary.json"
        assert json.loads(path.read_text())["kind"] == "gap_law"


def test_console_script_subprocess():
    res = subprocess.run([sys.executable, "-m", "poissonbec.cli", "experiment", "bogus-kind"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and res.stdout == ""
