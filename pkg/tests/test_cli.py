import json
import os
import subprocess
import sys

import pytest

from sectormc.cli import EXIT_CONFIG, EXIT_GUARD, main, verify_manifest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

MIXING = """experiment: mixing
seed: 7
code: {code: ising2d, side: 3}
beta: [1.0]
chain: {kind: block, L: 2}
times: [0, 1, 5]
"""


def test_build_ising(capsys):
    assert main(["build", "--code", "ising2d", "--side", "3"]) == 0
    out = capsys.readouterr().out
    assert "n=9 m=18 t=9 rank=8 k=1 ell=4 d=6" in out


def test_build_toric(capsys):
    assert main(["build", "--code", "toric4d", "--w", "3", "--radii", "1"]) == 0
    assert "n=486 k=6" in capsys.readouterr().out


def test_bad_arguments_exit_2(capsys):
    assert main(["build", "--code", "ising2d"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["build", "--code", "nonsense"])
    assert exc.value.code == EXIT_CONFIG


def test_run_writes_verified_manifest_and_is_reproducible(tmp_path):
    conf = tmp_path / "mix.yaml"
    conf.write_text(MIXING)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(conf), "--out", str(a)]) == 0
    assert main(["run", str(conf), "--out", str(b), "--threads", "2"]) == 0
    assert verify_manifest(a)
    for name in ("mixing.csv", "mixing.jsonl", "mixing.summary.json", "config.yaml"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 7 and "mixing.csv" in manifest["files"]
    (a / "mixing.csv").write_text("tampered\n")
    assert not verify_manifest(a)


def test_run_overrides_and_missing_seed(tmp_path):
    conf = tmp_path / "mix.yaml"
    conf.write_text(MIXING.replace("seed: 7\n", ""))
    assert main(["run", str(conf), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["run", str(conf), "--out", str(tmp_path / "y"), "--set", "seed=3", "--set", "times=[0,2]"]) == 0
    assert json.loads((tmp_path / "y" / "manifest.json").read_text())["config"]["times"] == [0.0, 2.0]
    assert main(["run", str(conf), "--out", str(tmp_path / "z"), "--set", "seed=3", "--set", "typo=1"]) == EXIT_CONFIG


def test_oracle_queries(capsys, tmp_path):
    assert main(["oracle", "gibbs", "--code", "ising2d", "--side", "3", "--beta", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["states"] == 256 and abs(out["total"] - 1) < 1e-12
    assert main(["oracle", "markov", "--code", "ising2d", "--side", "4", "--beta", "1",
                 "--partition", "1,9,17,25|0,2,8,10,16,18,24,26|rest"]) == 0
    assert json.loads(capsys.readouterr().out)["defect"] < 1e-12
    assert main(["oracle", "peierls", "--code", "ising2d", "--side", "3", "--beta", "1", "--V", "0"]) == EXIT_CONFIG


def test_oracle_refuses_large(capsys):
    assert main(["oracle", "gibbs", "--code", "ising2d", "--side", "8", "--beta", "1"]) == EXIT_GUARD


def test_fixtures_check(capsys, tmp_path):
    assert main(["fixtures-check", "--dir", FIXTURES]) == 0
    fx = json.loads(open(os.path.join(FIXTURES, "kernel_ising3_syndrome_b1.json")).read())
    fx["kernel_sha256"] = "0" * 64
    (tmp_path / "bad.json").write_text(json.dumps(fx))
    assert main(["fixtures-check", "--dir", str(tmp_path)]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sectormc.cli", "build", "--code", "ising1d", "--side", "5",
                        "--radii", "1"], capture_output=True, text=True)
    assert r.returncode == 0 and "n=5" in r.stdout


def test_shipped_configs_parse():
    from sectormc.cli import load_config
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    names = sorted(n for n in os.listdir(root) if n.endswith(".yaml"))
    assert names
    for name in names:
        load_config(os.path.join(root, name)).validate()
