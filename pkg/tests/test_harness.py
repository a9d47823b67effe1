import json

import numpy as np
import pytest
import torch

from texinspect.checkpoint import FORMAT_VERSION, load_checkpoint, read_manifest, save_checkpoint
from texinspect.exceptions import CheckpointError, ParameterError
from texinspect.harness import (
    MetricsReport,
    compute_iou,
    compute_pixel_acc,
    evaluate_dataset,
    parse_config_file,
)
from texinspect.imaging import (
    SynthSpec,
    load_image,
    pyramid_sizes,
    save_image,
    save_mask,
    synth_texture_sample,
)
from texinspect.inspection import inspect
from texinspect.models import TrainConfig
from texinspect.training import train_stack


def counting_oracle(pred, gt):
    tp = fp = fn = tn = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            p, g = bool(pred[i, j]), bool(gt[i, j])
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    iou = 1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)
    return iou, (tp + tn) / (tp + fp + fn + tn)


def test_metric_examples():
    m = np.array([[1, 0], [1, 1]], dtype=bool)
    assert compute_iou(m, m) == 1.0 and compute_pixel_acc(m, m) == 1.0
    assert compute_iou(np.eye(2, dtype=bool), ~np.eye(2, dtype=bool)) == 0.0
    assert compute_pixel_acc(m, ~m) == 0.0
    pred = np.array([[1, 1], [0, 0]], dtype=bool)  # TP, FP
    gt = np.array([[1, 0], [1, 0]], dtype=bool)  # FN, TN
    assert compute_iou(pred, gt) == pytest.approx(1 / 3)
    assert compute_pixel_acc(pred, gt) == 0.5
    empty = np.zeros((3, 3), dtype=bool)
    assert compute_iou(empty, empty) == 1.0


def test_metric_shape_mismatch():
    with pytest.raises(ParameterError):
        compute_iou(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ParameterError):
        compute_pixel_acc(np.zeros((2, 2)), np.zeros((3, 2)))


def test_metrics_match_counting_oracle():
    rng = np.random.default_rng(7)
    for k in range(1000):
        density = rng.uniform(0, 1) if k % 10 else 0.0
        pred = rng.uniform(size=(8, 8)) < density
        gt = rng.uniform(size=(8, 8)) < (density if k % 20 else 0.0)
        iou, acc = counting_oracle(pred, gt)
        assert compute_iou(pred, gt) == iou
        assert compute_pixel_acc(pred, gt) == acc


def test_report_aggregate_is_mean():
    rep = MetricsReport(rows=[{"image": str(k), "status": "ok", "iou": k / 10, "pixel_acc": 1 - k / 20}
                              for k in range(5)])
    assert rep.iou == pytest.approx(sum(k / 10 for k in range(5)) / 5)
    lines = rep.to_jsonl().splitlines()
    assert json.loads(lines[-1])["summary"] is True
    assert len(lines) == 6


@pytest.fixture(scope="module")
def stack():
    img, _ = synth_texture_sample(SynthSpec(size=32, defect_offset=0.0))
    return train_stack(img, TrainConfig(iterations=2, n_scales=2, width=8, branch_width=4, seed=1))


def _params(stack):
    out = {}
    for m in stack.models:
        for k, v in m.generator.state_dict().items():
            out[f"{m.index}.g.{k}"] = v
        for k, v in m.discriminator.state_dict().items():
            out[f"{m.index}.d.{k}"] = v
    return out


def test_checkpoint_round_trip(stack, tmp_path):
    save_checkpoint(stack, tmp_path)
    back = load_checkpoint(tmp_path)
    a, b = _params(stack), _params(back)
    assert a.keys() == b.keys()
    assert all(torch.equal(a[k], b[k]) for k in a)
    assert torch.equal(stack.zstar, back.zstar)
    assert [m.sigma for m in back.models] == [m.sigma for m in stack.models]
    assert back.sizes == stack.sizes and back.config == stack.config


def test_checkpoint_tamper_detected(stack, tmp_path):
    save_checkpoint(stack, tmp_path)
    path = tmp_path / "scale_0.pt"
    data = bytearray(path.read_bytes())
    data[-10] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="scale_0.pt"):
        load_checkpoint(tmp_path)


def test_checkpoint_missing_file_and_version(stack, tmp_path):
    save_checkpoint(stack, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = FORMAT_VERSION + 1
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path)
    save_checkpoint(stack, tmp_path)
    (tmp_path / "zstar.pt").unlink()
    with pytest.raises(CheckpointError, match="zstar.pt"):
        load_checkpoint(tmp_path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nowhere")


def test_manifest_sizes_for_256(tmp_path):
    img = np.zeros((1, 256, 256), dtype=np.float32)
    st = train_stack(img, TrainConfig(iterations=0, width=2, branch_width=1))
    save_checkpoint(st, tmp_path)
    manifest = read_manifest(tmp_path)
    assert manifest["n_scales"] == 9 and manifest["scale_factor"] == 0.75
    heights = [s[0] for s in manifest["sizes"]]
    assert heights == [256, 192, 144, 108, 81, 61, 46, 34, 26]
    assert [tuple(s) for s in manifest["sizes"]] == pyramid_sizes(256, 256, 0.75, 24)
    assert len(load_checkpoint(tmp_path).models) == 9


def _write_dataset(root, stack, n):
    (root / "images").mkdir(parents=True)
    (root / "masks").mkdir()
    for k in range(n):
        img, mask = synth_texture_sample(SynthSpec(size=32, defect_size=6, seed=10 + k))
        save_image(img, root / "images" / f"s{k}.png")
        save_mask(mask, root / "masks" / f"s{k}.png")


def test_evaluate_empty(tmp_path, stack):
    rep = evaluate_dataset(None, tmp_path / "a", tmp_path / "b", stack=stack)
    assert rep.rows == [] and rep.iou is None


def test_evaluate_perfect(tmp_path, stack):
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    img, _ = synth_texture_sample(SynthSpec(size=32, defect_size=6, seed=4))
    save_image(img, tmp_path / "images" / "a.png")
    pred = inspect(stack, load_image(tmp_path / "images" / "a.png", 32)).mask
    save_mask(pred, tmp_path / "masks" / "a.png")
    rep = evaluate_dataset(None, tmp_path / "images", tmp_path / "masks", stack=stack)
    assert (rep.iou, rep.pixel_acc) == (1.0, 1.0)


def test_evaluate_five_mean_and_stability(tmp_path, stack):
    save_checkpoint(stack, tmp_path / "model")
    _write_dataset(tmp_path, stack, 5)
    (tmp_path / "images" / "orphan.png").write_bytes((tmp_path / "images" / "s0.png").read_bytes())
    rep = evaluate_dataset(tmp_path / "model", tmp_path / "images", tmp_path / "masks")
    assert len(rep.rows) == 5 and [s["image"] for s in rep.skipped] == ["orphan"]
    assert rep.iou == pytest.approx(sum(r["iou"] for r in rep.rows) / 5, abs=1e-15)
    assert rep.pixel_acc == pytest.approx(sum(r["pixel_acc"] for r in rep.rows) / 5, abs=1e-15)
    rep.write(tmp_path / "r1.jsonl")
    evaluate_dataset(tmp_path / "model", tmp_path / "images", tmp_path / "masks").write(tmp_path / "r2.jsonl")
    assert (tmp_path / "r1.jsonl").read_bytes() == (tmp_path / "r2.jsonl").read_bytes()
    assert (tmp_path / "r1.txt").is_file()


def test_parse_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\niterations = 12\n\nscale_factor=0.8  # inline\nshared_branches = true\n")
    values = parse_config_file(p)
    cfg = TrainConfig.from_mapping(values)
    assert (cfg.iterations, cfg.scale_factor, cfg.shared_branches) == (12, 0.8, True)
    p.write_text("nonsense\n")
    with pytest.raises(ParameterError):
        parse_config_file(p)
    with pytest.raises(ParameterError):
        TrainConfig.from_mapping({"bogus": "1"})
