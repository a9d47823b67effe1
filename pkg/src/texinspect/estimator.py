"""scikit-learn style front end: ``fit`` on one normal image, ``predict`` defect masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .harness import compute_iou
from .inspection import inspect
from .models import TrainConfig
from .training import train_stack
from .validation import check_image


class TextureInspector(BaseEstimator):
    """One-shot texture defect localiser.

    Parameters mirror :class:`~texinspect.models.TrainConfig` plus the
    inference options ``entropy_sign`` ("saliency" or "literal") and
    ``threshold`` ("otsu" or "pXX").

    ``X`` is a single image (``(H, W)`` or ``(C, H, W)``, values in [-1, 1])
    or a sequence of them; methods return one result per image in the latter
    case.
    """

    def __init__(
        self,
        iterations=2000,
        lr_g=5e-4,
        lr_d=5e-4,
        recon_weight=10.0,
        recon_reduction="sum",
        d_steps=3,
        g_steps=3,
        scale_factor=0.75,
        min_dim=24,
        n_scales=None,
        width=32,
        branch_width=8,
        shared_branches=False,
        texture_module=True,
        d_eval_stats="image",
        deterministic=True,
        random_state=0,
        entropy_sign="saliency",
        threshold="otsu",
    ):
        self.iterations = iterations
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.recon_weight = recon_weight
        self.recon_reduction = recon_reduction
        self.d_steps = d_steps
        self.g_steps = g_steps
        self.scale_factor = scale_factor
        self.min_dim = min_dim
        self.n_scales = n_scales
        self.width = width
        self.branch_width = branch_width
        self.shared_branches = shared_branches
        self.texture_module = texture_module
        self.d_eval_stats = d_eval_stats
        self.deterministic = deterministic
        self.random_state = random_state
        self.entropy_sign = entropy_sign
        self.threshold = threshold

    def _train_config(self, image_size: int) -> TrainConfig:
        params = self.get_params()
        params.pop("entropy_sign")
        params.pop("threshold")
        params["seed"] = params.pop("random_state")
        params["image_size"] = image_size
        return TrainConfig(**params).validate()

    def fit(self, X, y=None, out_dir=None):
        """Train on the single normal image ``X``; ``y`` is ignored."""
        x = check_image(X)
        self.stack_ = train_stack(x, self._train_config(max(x.shape[-2:])), out_dir=out_dir)
        self._set_fitted_attrs()
        return self

    def _set_fitted_attrs(self):
        self.n_scales_ = self.stack_.n_scales
        self.level_sizes_ = list(self.stack_.sizes)
        self.noise_amplitudes_ = [self.stack_.model_at(n).sigma for n in range(self.n_scales_)]
        self.n_channels_ = self.stack_.channels

    @classmethod
    def from_checkpoint(cls, directory, **inference_params):
        stack = load_checkpoint(directory)
        cfg = stack.config
        est = cls(
            **{k: getattr(cfg, k) for k in cls._get_param_names() if hasattr(cfg, k)},
            random_state=cfg.seed,
            **inference_params,
        )
        est.stack_ = stack
        est._set_fitted_attrs()
        return est

    def save(self, directory) -> Path:
        check_is_fitted(self, "stack_")
        return save_checkpoint(self.stack_, directory)

    def _each(self, X, fn):
        if isinstance(X, (list, tuple)) or (hasattr(X, "ndim") and X.ndim == 4):
            return [fn(check_image(x)) for x in X]
        return fn(check_image(X))

    def inspect(self, X):
        """Full :class:`~texinspect.inspection.InspectionResult` per image."""
        check_is_fitted(self, "stack_")
        return self._each(
            X, lambda x: inspect(self.stack_, x, policy=self.threshold, mode=self.entropy_sign)
        )

    def decision_function(self, X):
        """Fused entropy map at the test resolution; higher = more anomalous in saliency mode."""
        res = self.inspect(X)
        return [r.fused for r in res] if isinstance(res, list) else res.fused

    def predict(self, X):
        """Boolean defect mask(s)."""
        res = self.inspect(X)
        return [r.mask for r in res] if isinstance(res, list) else res.mask

    def score(self, X, y):
        """Mean defect-class IoU of ``predict(X)`` against ground-truth mask(s) ``y``."""
        pred = self.predict(X)
        if isinstance(pred, list):
            return float(np.mean([compute_iou(p, t) for p, t in zip(pred, y)]))
        return compute_iou(pred, y)
