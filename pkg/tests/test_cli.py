import json
import subprocess
import sys

import numpy as np
import pytest

from png_lab.harness import cli
from png_lab.harness.runner import ResultTable
from png_lab.kernels import gap_cdf


def _cfg(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list(capsys):
    assert cli.main(["list"]) == 0
    assert "one_point" in capsys.readouterr().out


def test_experiment_writes_outputs(tmp_path):
    cfg = _cfg(tmp_path, "T = 2\ntrials = 200\n")
    out = tmp_path / "missing" / "run"
    assert cli.main(["one_point", "--config", cfg, "--seed", "4", "--out", str(out), "--svg"]) == 0
    for f in ("results.csv", "trials.csv", "manifest.json", "plot_results.svg"):
        assert (out / f).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["experiment"] == "one_point" and man["seed"] == 4 and man["config"]["T"] == 2.0
    t = ResultTable.read_csv(out / "results.csv")
    np.testing.assert_allclose(t["exact_cdf"], gap_cdf(2.0, t["level"]), rtol=0, atol=1e-15)


def test_rerun_is_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, "experiment = one_point\nseed = 12\nT = 3\ntrials = 300\n")
    cli.main(["run", cfg, "--out", str(tmp_path / "a")])
    cli.main(["run", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
    for f in ("results.csv", "trials.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    cli.main(["run", cfg, "--seed", "13", "--out", str(tmp_path / "c")])
    assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "c" / "trials.csv").read_bytes()


@pytest.mark.parametrize("argv, text", [
    (["one_point", "--out", "X"], "T = 2\n"),  # no seed
    (["one_point", "--seed", "1", "--out", "X", "--config", "C"], "bogus = 1\n"),
    (["one_point", "--seed", "1", "--out", "X", "--config", "C"], "trials = many\n"),
    (["one_point", "--seed", "1", "--out", "X", "--config", "C"], "T = -1\n"),
    (["nonexistent", "--out", "X"], ""),
    (["run", "C", "--out", "X"], "experiment = nope\nseed = 1\n"),
    (["accept", "16"], ""),
])
def test_config_errors_exit_2(tmp_path, capsys, argv, text):
    cfg = _cfg(tmp_path, text)
    argv = [cfg if a == "C" else str(tmp_path / "o") if a == "X" else a for a in argv]
    try:
        code = cli.main(argv)
    except SystemExit as exc:  # argparse-level errors leave through sys.exit
        code = exc.code
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "config"


def test_runtime_error_exit_3(tmp_path, capsys):
    assert cli.lpp_main(["--cloud", str(tmp_path / "none.csv"), "--target", "1,1"]) == 3
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "runtime"


def test_lpp_tool(tmp_path, capsys):
    cloud = tmp_path / "cloud.csv"
    cloud.write_text("u,v\n0.1,0.1\n0.2,0.3\n0.3,0.2\n0.5,0.5\n")
    path = tmp_path / "path.csv"
    assert cli.lpp_main(["--cloud", str(cloud), "--target", "1,1", "--path", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "3"
    lines = path.read_text().splitlines()
    assert lines[0] == "u,v" and len(lines) >= 4
    assert cli.main(["lpp", "--cloud", str(cloud), "--target", "0.4,0.4", "--line-to-point"]) == 0
    assert capsys.readouterr().out.strip() == "2"


def test_simulate_tool(tmp_path):
    q = tmp_path / "q.csv"
    q.write_text("x,t\n0,4\n1,4\n")
    out = tmp_path / "h.csv"
    args = ["--geometry", "droplet", "--T", "4", "--queries", str(q), "--seed", "3", "--trials", "5", "--out"]
    assert cli.simulate_main(args + [str(out)]) == 0
    t = ResultTable.read_csv(out)
    assert t.names() == ["trial", "x", "t", "h"] and t.rows == 10
    assert cli.simulate_main(args + [str(tmp_path / "h2.csv")]) == 0
    assert out.read_bytes() == (tmp_path / "h2.csv").read_bytes()


def test_multilayer_tool(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("theta\n0\n0.1\n")
    out = tmp_path / "m.csv"
    assert cli.multilayer_main(["--T", "4", "--depth", "3", "--angles", str(a), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "trial,theta,level_list"
    levels = [int(v) for v in lines[1].split(",")[2].split(";")]
    assert len(levels) == 4 and levels == sorted(levels, reverse=True)


def test_kernel_tools(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert cli.kernel_main(["gap", "--T", "2", "--n-range", "0:6", "--out", str(out)]) == 0
    t = ResultTable.read_csv(out)
    np.testing.assert_allclose(t["cdf"], gap_cdf(2.0, t["n"]), atol=1e-15)
    assert cli.kernel_main(["trace", "--T", "20"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["trace_matrix"] == pytest.approx(d["trace_closed"], rel=1e-8)
    assert cli.main(["kernel", "edge", "--T", "50", "--s-range", "-1:1:0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "s,value" and len(lines) == 6


def test_console_script_module():
    r = subprocess.run([sys.executable, "-m", "png_lab.harness.cli", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "multilayer" in r.stdout
