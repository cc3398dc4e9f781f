import subprocess
import sys

from vralloc.cli import main
from vralloc.output import read_csv


def test_validate_config_ok(capsys, tmp_path):
    cfg = tmp_path / "ok.cfg"
    cfg.write_text("numSbs = 5\nP_B = 23 dBm\n")
    assert main(["validate-config", "--config", str(cfg)]) == 0
    assert "config_sha256=" in capsys.readouterr().out


def test_validate_config_errors(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("numUsers = -1\n")
    assert main(["validate-config", "--config", str(cfg)]) != 0
    assert "num_users" in capsys.readouterr().err
    assert main(["validate-config", "--config", str(tmp_path / "missing.cfg")]) != 0


def test_sweep_writes_csv_and_manifest(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("periodLength = 20\nperiods = 2\nactionCap = 10\nreservoirSize = 30\n")
    code = main(["sweep", "--config", str(cfg), "--sbs", "3,4", "--learner", "q-corr,q-nocorr",
                 "--replications", "2", "--seed", "5", "--out", str(tmp_path / "o")])
    assert code == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert header == ["numSbs", "learner", "meanDelay_s", "stdDelay_s", "replications"]
    assert [r[:2] for r in rows] == [["3", "q-corr"], ["3", "q-nocorr"], ["4", "q-corr"],
                                     ["4", "q-nocorr"]]
    assert "seed=5" in (tmp_path / "o" / "manifest.txt").read_text()


def test_module_entry_point_rejects_unknown_learner():
    proc = subprocess.run([sys.executable, "-m", "vralloc", "sweep", "--learner", "sarsa"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "unknown learner" in proc.stderr
