import filecmp
import json
import subprocess
import sys

import pytest

from animkit.checkpoint import load_checkpoint
from animkit.cli import main
from animkit.media_io import load_clip, load_image
from conftest import make_tiny_config


def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_same_tree(a / d, b / d) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--per-class", "13", "--frames", "4", "--size", "16"]) == 0
    make_tiny_config().save(root / "config.json")
    assert main(["pretrain", "--data", str(root / "data"), "--out", str(root / "pre"),
                 "--config", str(root / "config.json")]) == 0
    assert main(["train", "--data", str(root / "data"), "--init", str(root / "pre"), "--out", str(root / "ckpt"),
                 "--config", str(root / "config.json")]) == 0
    return root


def test_gen_data_deterministic(workdir, tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "again"), "--per-class", "13", "--frames", "4",
                 "--size", "16"]) == 0
    assert _same_tree(workdir / "data", tmp_path / "again")


def test_fit_and_estimate(workdir, capsys):
    assert main(["fit-buckets", "--data", str(workdir / "data"), "--out", str(workdir / "buckets.json")]) == 0
    table = json.loads((workdir / "buckets.json").read_text())
    assert len(table["boundaries"]) == 9 and table["corpus_size"] == 104
    capsys.readouterr()
    clip = workdir / "data" / "clips" / "clip_00000"
    assert main(["estimate-intensity", "--clip", str(clip), "--buckets", str(workdir / "buckets.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["intensity"] <= 1 and 1 <= out["level"] <= 10
    assert main(["estimate-intensity", "--clip", str(clip)]) == 0
    assert "level" not in json.loads(capsys.readouterr().out)


def test_checkpoints(workdir):
    ckpt = load_checkpoint(workdir / "ckpt")
    assert ckpt.metrics["train_steps"] == 3 and ckpt.buckets is not None


def test_animate_writes_clip_and_grid(workdir, tmp_path):
    image = workdir / "data" / "clips" / "clip_00000" / "frame_0000.png"
    args = ["animate", "--ckpt", str(workdir / "ckpt"), "--image", str(image), "--text", "the red square moves left",
            "--level", "3", "--steps", "3", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert load_clip(tmp_path / "a").frames.shape == (4, 3, 16, 16)
    assert load_image(tmp_path / "a" / "grid.png").pixels.shape == (3, 16, 64)
    assert _same_tree(tmp_path / "a", tmp_path / "b")


def test_evaluate_report(workdir, tmp_path):
    suite = {"steps": 2, "cases": [
        {"id": "low", "clip": str(workdir / "data" / "clips" / "clip_00000"), "text": "the red square moves left",
         "level": 2, "seed": 0},
        {"id": "high", "clip": str(workdir / "data" / "clips" / "clip_00001"), "level": 8, "seed": 1},
    ]}
    (tmp_path / "suite.json").write_text(json.dumps(suite))
    assert main(["evaluate", "--ckpt", str(workdir / "ckpt"), "--suite", str(tmp_path / "suite.json"),
                 "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [r["id"] for r in report["per_clip"]] == ["low", "high"]
    assert {"mean_abs_error", "spearman", "mean_consistency", "mean_shuffled_consistency"} <= set(report["aggregate"])


def test_exit_codes(workdir, tmp_path):
    assert main(["estimate-intensity", "--clip", str(tmp_path / "missing")]) == 2
    assert main(["train", "--data", str(workdir / "data"), "--init", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["evaluate", "--ckpt", str(workdir / "ckpt"), "--suite", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "r.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["animate", "--ckpt", "x", "--image", "y", "--out", "z", "--level", "11"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def test_console_entry_point():
    result = subprocess.run([sys.executable, "-m", "animkit.cli", "gen-data"], capture_output=True, text=True)
    assert result.returncode == 1 and "--out" in result.stderr
