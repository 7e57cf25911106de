import json

import numpy as np
import pytest

from surveval import mlp
from surveval.cli import main

SMALL_GEN = ["--angles", "24", "--tributaries", "16", "--stride", "40"]


def _gen(tmp_path, extra=()):
    out = tmp_path / "data"
    rc = main(["gen-data", *SMALL_GEN, "--out", str(out), *extra])
    assert rc == 0
    return out


def test_gen_data_writes_csv_and_manifest(tmp_path):
    out = _gen(tmp_path)
    csv = (out / "dataset.csv").read_text()
    assert csv.splitlines()[0] == "x,y,dvx,dvy,v"
    manifest = json.loads((out / "gen_manifest.json").read_text())
    assert manifest["rows"] == len(csv.splitlines()) - 1
    assert manifest["axis_oracle_max_residual"] <= 1e-3


def test_gen_data_rerun_byte_identical(tmp_path):
    a = _gen(tmp_path / "a")
    b = _gen(tmp_path / "b")
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()


def test_unknown_flag_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen-data", "--no-such-flag"])
    assert e.value.code == 2


def test_missing_dataset_exits_1(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_train_and_reuse(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "model"
    rc = main(["train", "--data", str(data), "--seed", "7", "--epochs", "120",
               "--patience", "120", "--out", str(out)])
    assert rc == 0
    metrics = json.loads((out / "train_metrics.json").read_text())
    assert metrics["final_train_loss"] <= 0.2 * metrics["initial_train_loss"]
    m = mlp.load_checkpoint(out / "model.json")
    assert np.isfinite(mlp.forward(m, (0.1, 0.1))[0])

    sim = tmp_path / "sim"
    rc = main(["simulate", "--checkpoint", str(out / "model.json"),
               "--x0", "0", "--y0", "-0.5", "--pairs", "0.01:0.01",
               "--out", str(sim)])
    assert rc == 0
    lines = (sim / "game_times.csv").read_text().splitlines()
    assert lines[0] == "delta_e,delta_p,T"
    T = float(lines[1].split(",")[2])
    assert 0.0 < T < 5.0
    manifest = json.loads((sim / "simulate_manifest.json").read_text())
    assert manifest["checkpoint_sha256"]

    # render from the checkpoint and from the trajectory
    rc = main(["render", "--checkpoint", str(out / "model.json"), "--res", "31",
               "--field", "value", "--out", str(tmp_path / "value.svg")])
    assert rc == 0
    svg = (tmp_path / "value.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    traj = next(sim.glob("traj_*.csv"))
    rc = main(["render", "--traj", str(traj), "--out", str(tmp_path / "traj.svg")])
    assert rc == 0

    gl = tmp_path / "fields"
    rc = main(["gainloss", "--checkpoint", str(out / "model.json"),
               "--delta", "0.1", "--res", "11", "--out", str(gl)])
    assert rc == 0
    field_csv = gl / "gainloss_d0.1.csv"
    assert field_csv.exists()
    sidecar = json.loads((field_csv.with_suffix(".csv.json")).read_text())
    assert sidecar["checkpoint_hash"] == manifest["checkpoint_sha256"]
    rc = main(["render", "--gainloss", str(field_csv), "--component", "vmin",
               "--out", str(tmp_path / "vmin.svg")])
    assert rc == 0


def test_missing_checkpoint_exits_1(tmp_path, capsys):
    rc = main(["simulate", "--checkpoint", str(tmp_path / "none.json"),
               "--x0", "0", "--y0", "0", "--out", str(tmp_path)])
    assert rc == 1
    assert "checkpoint" in capsys.readouterr().err


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("angles = 24\ntributaries = 16\nstride = 40\n")
    out = tmp_path / "data"
    rc = main(["gen-data", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "gen_manifest.json").read_text())
    assert manifest["n_angles"] == 24
    # explicit flag beats the config value
    out2 = tmp_path / "data2"
    rc = main(["gen-data", "--config", str(cfg), "--angles", "16",
               "--tributaries", "8", "--out", str(out2)])
    assert rc == 0
    manifest2 = json.loads((out2 / "gen_manifest.json").read_text())
    assert manifest2["n_angles"] == 16


def test_env_outdir_default(tmp_path, monkeypatch):
    monkeypatch.setenv("SURVEVAL_OUTDIR", str(tmp_path / "envout"))
    # the parser is built at call time, so the env var shapes the default
    rc = main(["gen-data", *SMALL_GEN])
    assert rc == 0
    assert (tmp_path / "envout" / "data" / "dataset.csv").exists()
