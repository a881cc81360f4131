import json
import subprocess
import sys

import numpy as np
import pytest
import torch
import yaml
from PIL import Image

from seqforge.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from seqforge.generate import network_to_uint8, read_manifest


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def run_config(tmp_path, tiny_plan, corpus_file, font_dir):
    doc = {
        "renderer": {"corpus": str(corpus_file), "font_dir": str(font_dir)},
        "model": tiny_plan.to_dict(),
        "trainer": {"batch_size": 4, "epochs": 1, "checkpoint_every": 1},
        "generation": {"batch_size": 4},
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture
def checkpoint(tmp_path, run_config):
    assert main(["synth", "--config", str(run_config), "--count", "4", "--paired", "--out", str(tmp_path / "pairs")]) == 0
    out = tmp_path / "ckpt"
    assert main(["train", "--config", str(run_config), "--data", str(tmp_path / "pairs"), "--out", str(out)]) == 0
    return out / "ckpt_00000001.sqf"


def test_rescale_rounding():
    y = torch.tensor([1.0, 0.0, -1.0, 2.0]).view(1, 1, 1, 4).expand(1, 3, 1, 4)
    assert network_to_uint8(y).tolist() == [[[[255] * 3, [128] * 3, [0] * 3, [255] * 3]]]
    assert network_to_uint8(y, grayscale=True).tolist() == [[[255, 128, 0, 255]]]


def test_synth_writes_count_samples(tmp_path, run_config):
    out = tmp_path / "s"
    assert main(["synth", "--config", str(run_config), "--count", "5", "--out", str(out)]) == EXIT_OK
    for suffix in ("_semantic.png", "_glyph.png", "_fg.png", ".json"):
        assert len(list(out.glob(f"*{suffix}"))) == 5
    records = [json.loads(p.read_text()) for p in sorted(out.glob("*.json"))]
    assert [r["seed"] for r in records] == [0, 1, 2, 3, 4]


def test_synth_rerun_and_resume_are_byte_identical(tmp_path, run_config):
    args = ["synth", "--config", str(run_config), "--seed", "11"]
    assert main(args + ["--count", "5", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--count", "5", "--out", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    # Interrupted after three complete samples, with a half-written fourth.
    cut = tmp_path / "c"
    assert main(args + ["--count", "3", "--out", str(cut)]) == 0
    (cut / "00000003_semantic.png").write_bytes(b"partial")
    assert main(args + ["--count", "5", "--out", str(cut)]) == 0
    assert tree_bytes(cut) == tree_bytes(tmp_path / "a")


def test_train_zero_epochs(tmp_path, run_config):
    assert main(["synth", "--config", str(run_config), "--count", "4", "--paired", "--out", str(tmp_path / "p")]) == 0
    out = tmp_path / "t"
    assert main(["train", "--config", str(run_config), "--data", str(tmp_path / "p"), "--epochs", "0", "--out", str(out)]) == 0
    assert [p.name for p in out.glob("*.sqf")] == ["ckpt_00000000.sqf"]


def test_train_resume_matches_uninterrupted(tmp_path, run_config):
    data = tmp_path / "p"
    assert main(["synth", "--config", str(run_config), "--count", "8", "--paired", "--out", str(data)]) == 0
    base = ["train", "--config", str(run_config), "--data", str(data), "--epochs", "3"]
    assert main(base + ["--out", str(tmp_path / "full")]) == 0
    # Stop after the first epoch's checkpoint, then resume to the same target.
    cut = tmp_path / "cut"
    assert main(base + ["--max-steps", "2", "--out", str(cut)]) == 0
    assert main(base + ["--resume", "--out", str(cut)]) == 0
    full, resumed = tree_bytes(tmp_path / "full"), tree_bytes(cut)
    assert full["ckpt_00000006.sqf"] == resumed["ckpt_00000006.sqf"]
    assert full["loss_history.csv"] == resumed["loss_history.csv"]


def test_train_on_the_fly(tmp_path, run_config):
    out = tmp_path / "t"
    rc = main(["train", "--config", str(run_config), "--on-the-fly", "--epoch-size", "4", "--max-steps", "1", "--out", str(out)])
    assert rc == 0 and (out / "ckpt_00000001.sqf").exists()


def test_generate_grayscale_with_manifest(tmp_path, run_config, checkpoint, corpus):
    out = tmp_path / "g"
    assert main(["generate", "--config", str(run_config), "--checkpoint", str(checkpoint), "--count", "10", "--grayscale", "--out", str(out)]) == 0
    records = read_manifest(out / "manifest.jsonl")
    assert len(records) == 10 == len(list((out / "images").glob("*.png")))
    for i, r in enumerate(records):
        img = Image.open(out / r.image_path)
        assert img.mode == "L" and img.size == (128, 64)
        assert r.grayscale and (r.width, r.height) == (128, 64)
        assert r.seed == i and r.text in corpus.words


def test_generated_labels_match_semantic_samples(tmp_path, run_config, checkpoint):
    gen, syn = tmp_path / "g", tmp_path / "s"
    assert main(["generate", "--config", str(run_config), "--checkpoint", str(checkpoint), "--count", "6", "--out", str(gen)]) == 0
    assert main(["synth", "--config", str(run_config), "--count", "6", "--out", str(syn)]) == 0
    texts = [json.loads(p.read_text())["text"] for p in sorted(syn.glob("*.json"))]
    assert [r.text for r in read_manifest(gen / "manifest.jsonl")] == texts
    assert np.asarray(Image.open(gen / "images" / "00000000.png")).shape == (64, 128, 3)


def test_eval_same_directory(tmp_path, run_config, checkpoint):
    gen = tmp_path / "g"
    assert main(["generate", "--config", str(run_config), "--checkpoint", str(checkpoint), "--count", "6", "--out", str(gen)]) == 0
    report = tmp_path / "report.json"
    rc = main(["eval-metrics", str(gen / "images"), "--reference", str(gen / "images"), "--splits", "2", "--out", str(report)])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["fid"] <= 1e-6
    assert doc["extractor_id"].startswith("tiny-convnet")
    assert doc["generated_count"] == doc["reference_count"] == 6


def test_eval_missing_directory(tmp_path, capsys):
    missing = tmp_path / "no_such_dir"
    rc = main(["eval-metrics", str(missing), "--reference", str(tmp_path), "--out", str(tmp_path / "r.json")])
    assert rc != 0
    assert str(missing) in capsys.readouterr().err


def test_usage_errors(tmp_path, run_config):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--out", str(tmp_path)])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == EXIT_USAGE
    assert main(["synth", "--config", str(run_config), "--count", "0", "--out", str(tmp_path)]) == EXIT_USAGE
    bad = tmp_path / "bad.yaml"
    bad.write_text("trainer: {lr: 1}")
    assert main(["synth", "--config", str(bad), "--count", "1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_runtime_error_exit(tmp_path, run_config):
    garbage = tmp_path / "garbage.sqf"
    garbage.write_bytes(b"not a checkpoint")
    rc = main(["generate", "--config", str(run_config), "--checkpoint", str(garbage), "--count", "1", "--out", str(tmp_path / "g")])
    assert rc == EXIT_RUNTIME


def test_module_entry_point(tmp_path, run_config):
    out = tmp_path / "s"
    proc = subprocess.run(
        [sys.executable, "-m", "seqforge", "synth", "--config", str(run_config), "--count", "1", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "00000000.json").exists()
