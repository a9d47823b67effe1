"""Coarse-to-fine adversarial training of the generator/discriminator pyramid.

Scales are trained one at a time from the coarsest level to the finest and
frozen once done. The discriminator is trained with per-pixel binary
cross-entropy (real -> 1, generated -> 0); the generator with the opposite
adversarial target plus a weighted reconstruction term that ties a fixed
noise realisation ``z*`` to the training image.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import torch
import torch.nn.functional as F

from .discriminator import TextureDiscriminator
from .exceptions import ParameterError, TrainingError
from .generator import cascade, generate_at_scale
from .imaging import build_pyramid, resample
from .models import ScaleModel, TrainConfig, TrainedStack, build_scale_model
from .validation import check_image

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"


@contextlib.contextmanager
def deterministic_mode(enabled: bool = True):
    """Force deterministic kernels for the duration of the block."""
    if not enabled:
        yield
        return
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


def compute_noise_amplitude(level_image, reconstruction=None, coarsest: bool = False) -> float:
    """RMSE between the level image and the upsampled coarser reconstruction.

    The coarsest scale has no coarser reconstruction and always gets 1.
    """
    if coarsest or reconstruction is None:
        return 1.0
    real = torch.as_tensor(level_image, dtype=torch.float64)
    rec = torch.as_tensor(reconstruction, dtype=torch.float64)
    rec = resample(rec, *real.shape[-2:])
    if rec.shape[-3:] != real.shape[-3:]:
        raise ParameterError("reconstruction and level image must share channels and size")
    return float(torch.sqrt(torch.mean((rec.reshape(real.shape) - real) ** 2)))


def _bce(logits: torch.Tensor, target: float) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, torch.full_like(logits, target))


def discriminator_loss(disc: TextureDiscriminator, real: torch.Tensor, fake: torch.Tensor):
    loss_real = _bce(disc(real), 1.0)
    loss_fake = _bce(disc(fake), 0.0)
    return loss_real + loss_fake, loss_real, loss_fake


def generator_loss(
    model: ScaleModel,
    fake: torch.Tensor,
    rec_noise: torch.Tensor,
    rec_prev: Optional[torch.Tensor],
    real: torch.Tensor,
    recon_weight: float,
    reduction: str = "sum",
):
    """Adversarial term plus ``recon_weight`` times the squared reconstruction error.

    ``reduction="sum"`` uses the squared L2 norm, ``"mean"`` the per-pixel MSE.
    With ``recon_weight == 0`` the reconstruction pass runs without a graph so
    it contributes nothing to the gradients.
    """
    adv = _bce(model.discriminator(fake), 1.0)
    if recon_weight == 0:
        with torch.no_grad():
            rec = F.mse_loss(generate_at_scale(model, rec_noise, rec_prev), real, reduction=reduction)
        return adv, adv, rec
    rec = F.mse_loss(generate_at_scale(model, rec_noise, rec_prev), real, reduction=reduction)
    return adv + recon_weight * rec, adv, rec


def _check_finite(values: dict, model: ScaleModel, dump_dir: Optional[Path]):
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if not bad:
        return
    dump = None
    if dump_dir is not None:
        dump = Path(dump_dir) / f"diagnostic_scale{model.index}.pt"
        torch.save(
            {
                "losses": values,
                "sigma": model.sigma,
                "generator": model.generator.state_dict(),
                "discriminator": model.discriminator.state_dict(),
            },
            dump,
        )
    raise TrainingError(
        f"non-finite loss at scale {model.index}: {bad}"
        + (f"; state dumped to {dump}" if dump else ""),
        dump_path=dump,
    )


def train_scale(
    model: ScaleModel,
    frozen: Sequence[ScaleModel],
    real: torch.Tensor,
    config: TrainConfig,
    zstar: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    on_record: Optional[Callable[[dict], None]] = None,
    dump_dir=None,
) -> ScaleModel:
    """Train ``model`` against ``real`` with the coarser ``frozen`` models fixed.

    ``frozen`` is ordered coarse to fine and ends just above ``model``.
    ``zstar`` is the coarsest-scale reconstruction noise; finer scales
    reconstruct with zero noise.
    """
    gen_rng = generator if generator is not None else torch.Generator().manual_seed(config.seed)
    real = real.unsqueeze(0) if real.ndim == 3 else real
    channels = real.shape[1]

    rec_noises = [zstar] + [torch.zeros(1, channels, *m.size) for m in frozen[1:]]
    with torch.no_grad():
        rec_prev = cascade(frozen, rec_noises)[-1] if frozen else None
    model.sigma = compute_noise_amplitude(real, rec_prev, coarsest=not frozen)
    own_rec_noise = zstar if not frozen else torch.zeros_like(real)

    netG, netD = model.generator, model.discriminator
    netG.train()
    netD.train()
    opt_d = torch.optim.Adam(netD.parameters(), lr=config.lr_d)
    opt_g = torch.optim.Adam(netG.parameters(), lr=config.lr_g)

    def sample_prev():
        if not frozen:
            return None
        noises = [torch.randn(1, channels, *m.size, generator=gen_rng) for m in frozen]
        with torch.no_grad():
            return cascade(frozen, noises)[-1]

    def sample_noise():
        return torch.randn(real.shape, generator=gen_rng)

    for it in range(1, config.iterations + 1):
        prev = sample_prev()
        for _ in range(config.d_steps):
            with torch.no_grad():
                fake = generate_at_scale(model, sample_noise(), prev)
            opt_d.zero_grad(set_to_none=True)
            d_loss, d_real, d_fake = discriminator_loss(netD, real, fake)
            d_loss.backward()
            opt_d.step()
        for _ in range(config.g_steps):
            opt_g.zero_grad(set_to_none=True)
            fake = generate_at_scale(model, sample_noise(), prev)
            g_loss, adv, rec = generator_loss(
                model, fake, own_rec_noise, rec_prev, real, config.recon_weight,
                config.recon_reduction,
            )
            g_loss.backward()
            opt_g.step()
        record = {
            "scale": model.index,
            "iteration": it,
            "d_loss": d_loss.item(),
            "d_real": d_real.item(),
            "d_fake": d_fake.item(),
            "g_loss": g_loss.item(),
            "g_adv": adv.item(),
            "recon_loss": rec.item(),
        }
        _check_finite(record, model, dump_dir)
        if on_record is not None:
            on_record(record)
    return model.freeze()


def train_stack(image, config: Optional[TrainConfig] = None, out_dir=None) -> TrainedStack:
    """Train the full pyramid on one normal image.

    When ``out_dir`` is given a checkpoint is rewritten after every finished
    scale and each iteration's losses are appended to ``train_log.jsonl``.
    """
    from .checkpoint import save_checkpoint

    config = (config or TrainConfig()).validate()
    x0 = check_image(image)
    pyramid = build_pyramid(x0, config.scale_factor, config.min_dim, n_scales=config.n_scales)
    sizes = [tuple(s) for s in pyramid.sizes]
    channels = x0.shape[0]
    out_dir = Path(out_dir) if out_dir is not None else None
    log: List[dict] = []
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / LOG_NAME, "w")

    def on_record(rec):
        log.append(rec)
        if log_fh is not None:
            log_fh.write(json.dumps(rec, sort_keys=True) + "\n")

    try:
        with deterministic_mode(config.deterministic):
            torch.manual_seed(config.seed)
            rng = torch.Generator().manual_seed(config.seed)
            coarse_h, coarse_w = sizes[-1]
            zstar = torch.randn(1, channels, coarse_h, coarse_w, generator=rng)
            stack = TrainedStack(
                models=[], zstar=zstar, sizes=sizes, config=config, channels=channels, log=log
            )
            for n in reversed(range(len(sizes))):
                torch.manual_seed(config.seed * 1000 + n)
                model = build_scale_model(n, sizes[n], channels, config)
                logger.info("training scale %d (%dx%d)", n, *sizes[n])
                train_scale(
                    model,
                    stack.models,
                    pyramid[n],
                    config,
                    zstar,
                    generator=rng,
                    on_record=on_record,
                    dump_dir=out_dir,
                )
                stack.models.append(model)
                if out_dir is not None:
                    log_fh.flush()
                    save_checkpoint(stack, out_dir)
    finally:
        if log_fh is not None:
            log_fh.close()
    return stack


def reconstruct(stack: TrainedStack) -> List[torch.Tensor]:
    """Run the reconstruction cascade (``z*`` at the coarsest scale, zeros above)."""
    noises = [stack.zstar] + [
        torch.zeros(1, stack.channels, *m.size) for m in stack.models[1:]
    ]
    with torch.no_grad():
        return [o.squeeze(0) for o in cascade(stack.models, noises)]
