"""Segmentation metrics, dataset evaluation and config-file parsing.

Report format (``eval --report PATH``): one JSON object per line. Image rows
carry ``{"image", "status": "ok", "iou", "pixel_acc"}``; unpaired files carry
``{"image", "status": "skipped", "reason"}``; the last line is
``{"summary": true, "n_images", "n_skipped", "iou", "pixel_acc"}`` where the
metrics are arithmetic means over the ``ok`` rows (``null`` when there are
none). A plain-text table is written next to it with suffix ``.txt``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .exceptions import ParameterError
from .validation import check_mask, check_same_shape

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _confusion(pred, gt):
    p = check_mask(pred, "pred")
    g = check_mask(gt, "gt")
    check_same_shape(p, g)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size - tp - fp - fn)
    return tp, fp, fn, tn


def compute_iou(pred, gt) -> float:
    """Defect-class IoU; two empty masks score 1.0."""
    tp, fp, fn, _ = _confusion(pred, gt)
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def compute_pixel_acc(pred, gt) -> float:
    tp, fp, fn, tn = _confusion(pred, gt)
    return (tp + tn) / (tp + fp + fn + tn)


@dataclass
class MetricsReport:
    rows: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)

    @property
    def iou(self) -> Optional[float]:
        return float(np.mean([r["iou"] for r in self.rows])) if self.rows else None

    @property
    def pixel_acc(self) -> Optional[float]:
        return float(np.mean([r["pixel_acc"] for r in self.rows])) if self.rows else None

    def summary(self) -> dict:
        return {
            "summary": True,
            "n_images": len(self.rows),
            "n_skipped": len(self.skipped),
            "iou": self.iou,
            "pixel_acc": self.pixel_acc,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.rows + self.skipped]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        out = [f"{'image':<32} {'IoU(%)':>8} {'acc(%)':>8}"]
        for r in self.rows:
            out.append(f"{r['image']:<32} {100 * r['iou']:8.2f} {100 * r['pixel_acc']:8.2f}")
        for r in self.skipped:
            out.append(f"{r['image']:<32} {'skipped':>8}  {r['reason']}")
        if self.rows:
            out.append(f"{'MEAN':<32} {100 * self.iou:8.2f} {100 * self.pixel_acc:8.2f}")
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        path.with_suffix(".txt").write_text(self.to_table())


def _by_stem(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        return {}
    return {
        p.stem: p
        for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    }


def evaluate_dataset(
    model_dir,
    image_dir,
    mask_dir,
    policy: str = "otsu",
    mode: str = "saliency",
    stack=None,
) -> MetricsReport:
    """Inspect every image in ``image_dir`` and score it against the mask with the same stem.

    Images without a mask (and masks without an image) are reported as skipped.
    """
    from .checkpoint import load_checkpoint
    from .imaging import load_image, load_mask
    from .inspection import inspect

    images = _by_stem(Path(image_dir))
    masks = _by_stem(Path(mask_dir))
    report = MetricsReport()
    if not images and not masks:
        return report
    if stack is None:
        stack = load_checkpoint(model_dir)
    size = tuple(stack.sizes[0])
    for stem in sorted(set(images) | set(masks)):
        if stem not in masks:
            report.skipped.append({"image": stem, "status": "skipped", "reason": "no mask"})
            continue
        if stem not in images:
            report.skipped.append({"image": stem, "status": "skipped", "reason": "no image"})
            continue
        img = load_image(images[stem], size)
        gt = load_mask(masks[stem], size)
        result = inspect(stack, img, policy=policy, mode=mode)
        report.rows.append(
            {
                "image": stem,
                "status": "ok",
                "iou": compute_iou(result.mask, gt),
                "pixel_acc": compute_pixel_acc(result.mask, gt),
            }
        )
    return report


def parse_config_file(path) -> Dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values
