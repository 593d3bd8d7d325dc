"""Command line surface: subcommands, outputs, exit codes."""

import json
import os

import pytest

from hilsim.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_OK, main


def test_run_crosswalk_demo(tmp_path, capsys):
    out = tmp_path / "demo.log"
    code = main(["run", "--scenario", "crosswalk_demo", "--out", str(out)])
    captured = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.exists()
    assert "complete stops: 1" in captured
    assert "collisions: 0" in captured


def test_run_ignoring_scenario_expects_collision(tmp_path):
    out = tmp_path / "hit.log"
    code = main(["run", "--scenario", "crosswalk_demo_ignoring",
                 "--out", str(out)])
    assert code == EXIT_OK  # this scenario EXPECTS the collision


def test_run_missing_scenario_config_error(tmp_path):
    code = main(["run", "--scenario", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "x.log")])
    assert code == EXIT_CONFIG


def test_run_failed_expectation_exit_code(tmp_path):
    config = {
        "map": "crosswalk",
        "duration": 5,
        "actors": [],
        "expect": {"complete_stop": True},
    }
    path = tmp_path / "impossible.json"
    path.write_text(json.dumps(config))
    code = main(["run", "--scenario", str(path),
                 "--out", str(tmp_path / "y.log")])
    assert code == EXIT_ASSERTION


def test_replay_prints_frames(tmp_path, capsys):
    out = tmp_path / "demo.log"
    config = {
        "map": "crosswalk",
        "duration": 8,
        "actors": [{"blueprint": "vehicle.sedan",
                    "transform": [0, 0, 0, 0, 0, 0], "speed": 5.0}],
    }
    path = tmp_path / "small.json"
    path.write_text(json.dumps(config))
    assert main(["run", "--scenario", str(path), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["replay", "--log", str(out)]) == EXIT_OK
    captured = capsys.readouterr().out
    assert "frame      0" in captured
    assert "replayed 9 frames" in captured


def test_export_writes_files(tmp_path, capsys):
    log_path = tmp_path / "demo.log"
    config = {
        "map": "crosswalk",
        "duration": 2,
        "actors": [
            {"blueprint": "vehicle.sedan", "transform": [0, 0, 0, 0, 0, 0]},
            {"blueprint": "walker.avatar", "transform": [8, 0, 0, 0, 0, 0],
             "drive_mode": "bvh-replay",
             "clip": {"builtin": "crossing", "frames": 3}},
        ],
    }
    (tmp_path / "s.json").write_text(json.dumps(config))
    assert main(["run", "--scenario", str(tmp_path / "s.json"),
                 "--out", str(log_path)]) == EXIT_OK
    sensors = [{"kind": "lidar", "name": "top", "channels": 2, "h_steps": 60,
                "v_fov": [-10.0, 0.0], "attach_to": 1,
                "mount": [0, 0, 2.2, 0, 0, 0]}]
    (tmp_path / "sensors.json").write_text(json.dumps(sensors))
    out_dir = tmp_path / "dataset"
    code = main(["export", "--log", str(log_path),
                 "--sensors", str(tmp_path / "sensors.json"),
                 "--out", str(out_dir)])
    assert code == EXIT_OK
    files = sorted(os.listdir(out_dir))
    assert "top_000000.ply" in files
    assert "manifest.json" in files


def test_score_command(tmp_path, capsys):
    rows = ["subject_id,subscale,item,rating"]
    for subject in ("a", "b"):
        for subscale in ("self", "vehicle", "environment"):
            for item in range(1, 6):
                rows.append(f"{subject},{subscale},{item},4")
    path = tmp_path / "responses.csv"
    path.write_text("\n".join(rows) + "\n")
    assert main(["score", "--responses", str(path)]) == EXIT_OK
    captured = capsys.readouterr().out
    assert "(M=4.00, SD=0.000)" in captured


def test_score_invalid_csv_config_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("subject_id,subscale,item,rating\na,self,1,9\n")
    assert main(["score", "--responses", str(path)]) == EXIT_CONFIG
