import json

import numpy as np
import pytest
from PIL import Image

from texinspect.cli import EXIT_EMPTY, EXIT_ERROR, EXIT_OK, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "synth.cfg"
    spec.write_text("family = stripes\nsize = 32\ndefect_size = 6\ndefect_offset = 0.6\nseed = 1\ncount = 3\n")
    assert main(["synth", "--spec", str(spec), "--out", str(root / "data")]) == EXIT_OK
    normal = root / "normal.cfg"
    normal.write_text("size = 32\ndefect_offset = 0\n")
    assert main(["synth", "--spec", str(normal), "--out", str(root / "normal")]) == EXIT_OK
    cfg = root / "train.cfg"
    cfg.write_text("iterations = 50\nwidth = 8\nbranch_width = 4\n")
    rc = main([
        "train", "--image", str(root / "normal" / "images" / "stripes_0000.png"),
        "--out", str(root / "model"), "--config", str(cfg),
        "--scales", "2", "--iters", "2", "--seed", "3", "--size", "32",
    ])
    assert rc == EXIT_OK
    return root


def test_synth_outputs(workspace):
    imgs = sorted(p.name for p in (workspace / "data" / "images").iterdir())
    assert imgs == ["stripes_0001.png", "stripes_0002.png", "stripes_0003.png"]
    mask = np.asarray(Image.open(workspace / "data" / "masks" / "stripes_0001.png"))
    assert mask.dtype == np.uint8 and set(np.unique(mask)) == {0, 255}
    assert (mask == 255).sum() == 36


def test_train_flags_override_config(workspace):
    manifest = json.loads((workspace / "model" / "manifest.json").read_text())
    assert manifest["config"]["iterations"] == 2
    assert manifest["config"]["width"] == 8
    assert manifest["n_scales"] == 2
    log = (workspace / "model" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 4


def test_inspect_per_scale(workspace, tmp_path):
    out = tmp_path / "insp"
    rc = main([
        "inspect", "--model", str(workspace / "model"),
        "--image", str(workspace / "data" / "images" / "stripes_0001.png"),
        "--out", str(out), "--per-scale", "--threshold", "p95",
    ])
    assert rc == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["H_0.png", "H_1.png", "fused.npy", "fused.png", "mask.png"]
    assert np.asarray(Image.open(out / "H_1.png")).shape == (24, 24)
    mask = np.asarray(Image.open(out / "mask.png"))
    assert mask.shape == (32, 32) and (mask == 255).sum() == round(32 * 32 * 0.05)


def test_eval_and_empty(workspace, tmp_path, capsys):
    report = tmp_path / "rep.jsonl"
    rc = main([
        "eval", "--model", str(workspace / "model"), "--images", str(workspace / "data" / "images"),
        "--masks", str(workspace / "data" / "masks"), "--report", str(report),
    ])
    assert rc == EXIT_OK
    rows = [json.loads(l) for l in report.read_text().splitlines()]
    assert rows[-1]["summary"] and rows[-1]["n_images"] == 3
    (tmp_path / "e1").mkdir()
    (tmp_path / "e2").mkdir()
    rc = main(["eval", "--model", str(workspace / "model"), "--images", str(tmp_path / "e1"),
               "--masks", str(tmp_path / "e2"), "--report", str(tmp_path / "empty.jsonl")])
    assert rc == EXIT_EMPTY


def test_errors_return_nonzero(tmp_path, capsys):
    assert main(["inspect", "--model", str(tmp_path), "--image", "x.png", "--out", str(tmp_path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
