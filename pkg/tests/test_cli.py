import json
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

from microcarla.cli import main
from microcarla.town import bundled_town_path


def test_serve_bad_town_path_exits_2(capsys):
    assert main(["serve", "--town", "/no/such/town.json"]) == 2
    assert "error" in capsys.readouterr().err


def test_bench_requires_task(capsys):
    assert main(["bench"]) == 2


def test_bench_small_run_writes_reports(tmp_path):
    out = tmp_path / "results"
    code = main(["bench", "--agent", "pilot", "--task", "straight",
                 "--town", "b", "--weathers", "training", "--episodes", "2",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    assert (out / "episodes.jsonl").exists()
    assert (out / "summary.txt").exists()
    rows = (out / "success.csv").read_text().splitlines()
    assert rows[0] == "task,new-town"
    assert rows[1].startswith("straight,")


def test_record_then_replay_roundtrip(tmp_path):
    demo = tmp_path / "demo.jsonl"
    code = main(["record", "--town", "a", "--expert", "pilot",
                 "--minutes", "0.1", "--seed", "4", "--out", str(demo)])
    assert code == 0
    _, samples = _read_samples(demo)
    assert len(samples) == 60  # 0.1 min at 10 Hz
    assert main(["replay", str(demo)]) == 0


def test_replay_detects_tampering(tmp_path, capsys):
    demo = tmp_path / "demo.jsonl"
    main(["record", "--town", "a", "--minutes", "0.05", "--seed", "4",
          "--out", str(demo), "--no-perturb"])
    lines = demo.read_text().splitlines()
    row = json.loads(lines[10])
    row["frame"]["measurements"]["position"][0] += 0.001
    lines[10] = json.dumps(row, separators=(",", ":"), sort_keys=True)
    demo.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(demo)]) == 1
    assert "diverged at tick" in capsys.readouterr().err


def test_report_regenerates_from_episode_log(tmp_path):
    out = tmp_path / "results"
    main(["bench", "--task", "straight", "--town", "b", "--weathers",
          "training", "--episodes", "2", "--out", str(out)])
    summary = (out / "summary.txt").read_text()
    (out / "summary.txt").unlink()
    assert main(["report", "--results", str(out)]) == 0
    assert (out / "summary.txt").read_text() == summary


def test_towns_env_var_resolution(tmp_path, monkeypatch):
    towns_dir = tmp_path / "towns"
    towns_dir.mkdir()
    shutil.copy(bundled_town_path("b"), towns_dir / "mini.json")
    monkeypatch.setenv("MICROCARLA_TOWNS", str(towns_dir))
    demo = tmp_path / "demo.jsonl"
    assert main(["record", "--town", "mini", "--minutes", "0.05",
                 "--out", str(demo)]) == 0


def _read_samples(path):
    header = None
    samples = []
    for line in Path(path).read_text().splitlines():
        obj = json.loads(line)
        if obj["type"] == "header":
            header = obj
        else:
            samples.append(obj)
    return header, samples


def test_bench_parallel_jobs_match_serial(tmp_path):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    args = ["bench", "--task", "straight", "--town", "b", "--weathers",
            "training", "--episodes", "4", "--seed", "5"]
    assert main(args + ["--out", str(serial)]) == 0
    assert main(args + ["--jobs", "2", "--out", str(parallel)]) == 0
    assert (serial / "episodes.jsonl").read_bytes() == \
        (parallel / "episodes.jsonl").read_bytes()


def test_cli_entry_point_runs_in_subprocess(tmp_path):
    """The installed console path works end to end in a fresh interpreter."""
    out = tmp_path / "demo.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "microcarla.cli", "record", "--minutes", "0.05",
         "--town", "b", "--out", str(out)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
