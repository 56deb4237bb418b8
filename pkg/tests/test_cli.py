import json
import subprocess
import sys

import pytest

from mjbp.cli import main
from mjbp.experiments import RESULT_CSV_HEADER, read_csv

CFG = """
[system]
M = 8
K = 2
N = 6
Ts = 2
Tf = 5
[algorithm]
bcd_tol = 1e-3
max_cycles = 20
[experiment]
seeds = 2
schemes = mjbp, mrt
cdf_instances = 3
cdf_samples = 20
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CFG)
    return path


def test_sweep_writes_csv_and_meta(cfg, tmp_path):
    out = tmp_path / "out.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4 and all(r.status == "ok" for r in rows)
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["command"] == "sweep" and len(meta["runtime_s"]) == 4


def test_seed_override_changes_draws(cfg, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["sweep", "--config", str(cfg), "--out", str(a), "--seed", "1"])
    main(["sweep", "--config", str(cfg), "--out", str(b), "--seed", "2"])
    assert read_csv(a)[0].channel_digest != read_csv(b)[0].channel_digest


def test_stdout_when_no_out(cfg, capsys):
    assert main(["tradeoff", "--config", str(cfg)]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == ",".join(RESULT_CSV_HEADER)
    assert len(text.splitlines()) == 1 + 4 * 2 * 2


def test_cdf_command(cfg, tmp_path):
    out = tmp_path / "cdf.csv"
    assert main(["cdf", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "bound,value,probability"
    meta = json.loads((tmp_path / "cdf.csv.meta.json").read_text())
    assert meta["T"] == 400


def test_config_error_line(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[system]\nM = 8\nfoo = 1\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: kind=ConfigError line=3 message=")


def test_missing_file_is_error(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert capsys.readouterr().err.startswith("error: kind=FileNotFoundError line=- message=")


def test_bad_threads(cfg, capsys):
    assert main(["sweep", "--config", str(cfg), "--threads", "0"]) == 2


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_console_entry_point(cfg, tmp_path):
    out = tmp_path / "o.csv"
    proc = subprocess.run([sys.executable, "-m", "mjbp.cli", "sweep", "--config", str(cfg), "--out", str(out),
                           "--threads", "2", "--verbose"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "INFO" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "mjbp.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode != 0
