import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from handxfer.cli import main
from handxfer.demos import FrameOfReference, Source, Trajectory, load_dataset, load_trajectory
from handxfer.demos.perception import render_bundle, save_bundle
from handxfer.geom3d import PinholeCamera, RigidTransform
from handxfer.scene import TaskSpec
from handxfer.vnpolicy import desk_config


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def small_task(tmp_path_factory):
    path = tmp_path_factory.mktemp("task") / "reach.json"
    spec = TaskSpec(task="reach", N=8, max_steps=30)
    path.write_text(json.dumps(spec.to_dict()))
    return path


@pytest.fixture(scope="module")
def small_policy(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "policy.json"
    cfg = desk_config(N=8, T_o=4, T_p=6, token_dim=16, vn_channels=(8,), head_hidden=(32,),
                      transformer={"layers": 1, "heads": 2, "feedforward_dim": 32},
                      batch_size=16, learning_rate=3e-3, epochs=3)
    path.write_text(cfg.to_json())
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, small_task, small_policy):
    """synth -> align -> train on a small task, shared by the downstream tests."""
    root = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--task", small_task, "--count", 6, "--seed", 7, "--out", root / "raw") == 0
    assert run("align", "--scene", root / "raw" / "scene.aina", "--wild-dir", root / "raw" / "wild",
               "--out", root / "aligned") == 0
    assert run("train", "--data", root / "aligned", "--config", small_policy,
               "--seed", 1, "--out", root / "model") == 0
    return root


def test_synth_counts_and_determinism(tmp_path):
    runs = []
    for _ in range(2):
        assert run("synth", "--task", "reach", "--count", 50, "--seed", 7, "--out", tmp_path / "a") == 0
        runs.append(tree_bytes(tmp_path / "a"))
    assert runs[0] == runs[1]
    data = load_dataset(tmp_path / "a")
    assert data.in_scene.source == Source.IN_SCENE
    assert len(data.in_the_wild) == 49
    cfg = json.loads((tmp_path / "a" / "resolved_config.json").read_text())
    assert cfg["seed"] == 7 and cfg["task"]["task"] == "reach"


def test_synth_rejects_zero_count(tmp_path, capsys):
    assert run("synth", "--task", "reach", "--count", 0, "--out", tmp_path) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_arguments_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("synth", "--task", "reach")
    assert exc.value.code == 2
    assert run("synth", "--task", "juggle", "--count", 2, "--out", tmp_path) == 2


def bundle_dir(tmp_path):
    T = 5
    grid = np.array([[0.40, -0.06, 0.02], [0.44, 0.0, 0.05], [0.48, 0.06, 0.02], [0.44, 0.08, 0.1]])
    objects = np.repeat(grid[None], T, axis=0) + np.linspace(0, 0.02, T)[:, None, None]
    tips = np.repeat(np.array([[0.42, y, 0.2] for y in (0.05, 0.02, 0.0, -0.02, -0.04)])[None], T, 0)
    traj = Trajectory(timestamps=np.arange(T) * 0.1, objects=objects, fingertips=tips,
                      source=Source.IN_THE_WILD,
                      frame_of_reference=FrameOfReference.WORLD_GRAVITY_ALIGNED,
                      task_name="reach", prompts=("touch",))
    # camera above the table looking straight down (x right, y down in the image)
    pose = RigidTransform(np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]]), np.array([0.44, 0, 1.0]))
    bundle = render_bundle(traj, PinholeCamera(900.0, 900.0, 640.0, 480.0), [pose] * T, 1280, 960)
    return traj, save_bundle(bundle, tmp_path / "bundle")


def test_ingest_round_trip(tmp_path):
    traj, bundle = bundle_dir(tmp_path)
    assert run("ingest", "--bundle", bundle, "--frame", "world", "--out", tmp_path / "out") == 0
    got = load_trajectory(tmp_path / "out" / "trajectory.aina")
    assert np.abs(got.objects - traj.objects).max() < 1e-6
    assert np.abs(got.fingertips - traj.fingertips).max() < 1e-6
    assert got.frame_of_reference == FrameOfReference.WORLD_GRAVITY_ALIGNED


def test_ingest_failures(tmp_path, capsys):
    _, bundle = bundle_dir(tmp_path)
    (bundle / "pose_0004.json").unlink()
    assert run("ingest", "--bundle", bundle, "--out", tmp_path / "o1") == 1
    assert "FrameCountMismatch" in capsys.readouterr().err
    (bundle / "grid.json").unlink()
    assert run("ingest", "--bundle", bundle, "--out", tmp_path / "o2") == 1
    assert "depth header" in capsys.readouterr().err


def test_align_outputs_and_yaws(pipeline):
    aligned = load_dataset(pipeline / "aligned")
    assert all(t.frame_of_reference == FrameOfReference.ROBOT_BASE for t in aligned.trajectories)
    raw = load_dataset(pipeline / "raw")
    with open(pipeline / "aligned" / "alignment.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    for row, demo in zip(rows, raw.metadata["demos"][1:]):
        assert float(row["theta_z"]) == pytest.approx(demo["world_yaw"], abs=1e-6)


def test_align_empty_wild_dir(pipeline, tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("align", "--scene", pipeline / "raw" / "scene.aina", "--wild-dir", tmp_path / "empty",
               "--out", tmp_path / "out") == 0
    with open(tmp_path / "out" / "alignment.csv") as fh:
        assert list(csv.reader(fh)) == [["trajectory", "delta_x", "delta_y", "delta_z", "theta_z"]]


def test_train_writes_artifacts(pipeline):
    log = json.loads((pipeline / "model" / "training_log.json").read_text())
    assert len(log["epoch_loss"]) == 3
    cfg = json.loads((pipeline / "model" / "resolved_config.json").read_text())
    assert cfg["policy"]["seed"] == 1 and cfg["policy"]["N"] == 8


def test_eval_training_set_not_worse_than_held_out(pipeline, small_task, tmp_path):
    assert run("synth", "--task", small_task, "--count", 6, "--seed", 99, "--out", tmp_path / "raw") == 0
    assert run("align", "--scene", tmp_path / "raw" / "scene.aina", "--wild-dir",
               tmp_path / "raw" / "wild", "--out", tmp_path / "aligned") == 0
    model = pipeline / "model" / "model.ainm"
    assert run("eval", "--model", model, "--data", pipeline / "aligned", "--out", tmp_path / "e1") == 0
    assert run("eval", "--model", model, "--data", tmp_path / "aligned", "--out", tmp_path / "e2") == 0
    seen = json.loads((tmp_path / "e1" / "eval_report.json").read_text())["mse"]
    unseen = json.loads((tmp_path / "e2" / "eval_report.json").read_text())["mse"]
    assert seen <= unseen


def test_rollout_reports_and_traces(pipeline, small_task, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("AINA_THREADS", "2")
    model = pipeline / "model" / "model.ainm"
    assert run("rollout", "--model", model, "--task", small_task, "--episodes", 3,
               "--seed", 4, "--out", tmp_path / "r") == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    report = json.loads((tmp_path / "r" / "rollout_report.json").read_text())
    assert printed["success_rate"] == report["success_rate"]
    assert len(report["reports"]) == 3
    assert json.loads((tmp_path / "r" / "resolved_config.json").read_text())["threads"] == 2
    traces = sorted((tmp_path / "r" / "traces").glob("*.aina"))
    assert len(traces) == 3
    assert load_trajectory(traces[0]).source == Source.IN_SCENE


def test_rollout_missing_model(tmp_path, capsys):
    assert run("rollout", "--model", tmp_path / "nope.ainm", "--task", "reach") == 1
    assert "Error" in capsys.readouterr().err


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv("AINA_THREADS", "zero")
    assert run("synth", "--task", "reach", "--count", 2, "--out", tmp_path) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "handxfer.cli", "synth", "--task", "reach",
                           "--count", "0", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
