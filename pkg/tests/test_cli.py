import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from excursor.cli import main


def _files(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))
            if f != "manifest.json"}


@pytest.fixture(scope="module")
def prices(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--n", "1000", "--count", "6", "--groups", "2",
                 "--loading", "0.6", "--seed", "3"]) == 0
    return out / "prices.csv"


COMMANDS = [
    ["density", "--theta=-2:2:0.5"],
    ["tpcf", "--theta", "0", "--realizations", "20", "--pairs", "S00:S01,S02"],
    ["tpcf", "--theta", "0", "--realizations", "20", "--pairs", "S00", "--estimator", "ls"],
    ["psi", "--realizations", "20"],
    ["psi", "--realizations", "20", "--feature", "pk", "--cross-feature", "tr", "--tau", "1"],
    ["partition", "--window", "200", "--realizations", "10", "--feature", "up"],
]


@pytest.mark.parametrize("cmd", COMMANDS, ids=lambda c: "-".join(c[:1] + c[-2:]))
def test_replay_byte_identical(cmd, prices, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main([cmd[0], "--input", str(prices), "--out", str(first)] + cmd[1:]) == 0
    assert main(["replay", str(first / "manifest.json"), "--out", str(second)]) == 0
    a, b = _files(first), _files(second)
    assert a and a == b
    m = json.loads((first / "manifest.json").read_text())
    assert m["command"] == cmd[0] and m["seed"] == 0 and m["rng"].startswith("PCG64")
    assert set(m["data_files"]) == set(a)


def test_synth_replay(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--n", "300", "--count", "3"]) == 0
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_ahc_replay(prices, tmp_path):
    assert main(["psi", "--input", str(prices), "--out", str(tmp_path / "p"),
                 "--realizations", "20"]) == 0
    psi_json = tmp_path / "p" / "psi.json"
    assert main(["ahc", "--input", str(psi_json), "--out", str(tmp_path / "a")]) == 0
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    d = json.loads((tmp_path / "a" / "dendrogram.json").read_text())
    assert len(d["merges"]) == 5
    assert (tmp_path / "a" / "dendrogram.nwk").read_text().strip().endswith(";")


def test_replay_detects_changed_input(prices, tmp_path):
    copy = tmp_path / "prices.csv"
    copy.write_bytes(prices.read_bytes())
    assert main(["psi", "--input", str(copy), "--out", str(tmp_path / "a"),
                 "--realizations", "5"]) == 0
    copy.write_text(copy.read_text().replace("100,", "101,", 1))
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 1


def test_threads_independent(prices, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("EXCURSOR_THREADS", threads)
        out = tmp_path / threads
        assert main(["partition", "--input", str(prices), "--out", str(out), "--window", "250",
                     "--realizations", "10"]) == 0
        outs.append(_files(out))
    assert outs[0] == outs[1]


def test_config_file_merged_under_flags(prices, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# defaults\nrealizations = 7\ntau-max = 4\ntheta = 0.5\n")
    out = tmp_path / "o"
    assert main(["tpcf", "--config", str(conf), "--input", str(prices), "--out", str(out),
                 "--pairs", "S00", "--tau-max", "3"]) == 0
    params = json.loads((out / "manifest.json").read_text())["parameters"]
    assert params["realizations"] == 7 and params["tau_max"] == 3 and params["theta"] == "0.5"
    rows = list(csv.DictReader(open(out / "tpcf.csv")))
    assert [int(r["lag"]) for r in rows] == [0, 1, 2, 3]


def test_bad_config_key(prices, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = blue\n")
    assert main(["tpcf", "--config", str(conf), "--input", str(prices),
                 "--out", str(tmp_path / "o")]) == 1


def test_density_white_noise_overlay(tmp_path):
    assert main(["synth", "--kind", "white", "--n", "200000", "--count", "1",
                 "--out", str(tmp_path / "s")]) == 0
    assert main(["density", "--input", str(tmp_path / "s" / "prices.csv"), "--out",
                 str(tmp_path / "d"), "--feature", "up", "--theta", "0"]) == 0
    rows = {r["curve"]: float(r["density"]) for r in csv.DictReader(open(tmp_path / "d" / "density.csv"))}
    assert abs(rows["empirical"] - 0.25) < 0.005
    assert rows["iid"] == 0.25
    # white noise: sigma1/sigma0 = sqrt(2), Rice rate sqrt(2)/(2 pi)
    assert rows["gaussian"] == pytest.approx(np.sqrt(2) / (2 * np.pi), rel=0.01)


def test_partial_failure_exit_code(tmp_path, capsys):
    assert main(["synth", "--kind", "white", "--n", "150", "--count", "3",
                 "--out", str(tmp_path / "s")]) == 0
    code = main(["psi", "--input", str(tmp_path / "s" / "prices.csv"), "--out",
                 str(tmp_path / "p"), "--theta", "2.5", "--realizations", "5"])
    assert code == 2
    assert "failed" in capsys.readouterr().err
    m = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert m["failed"]


def test_errors_exit_one(tmp_path, capsys):
    assert main(["psi", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("date,A\n2020-01-01,1\n2020-01-02,0\n")
    assert main(["density", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "non-positive price" in capsys.readouterr().err


def test_console_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "excursor.cli", "synth", "--n", "200", "--count", "2",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "prices.csv").exists()
