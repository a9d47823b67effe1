"""On-disk checkpoint format.

A checkpoint is a directory::

    manifest.json      format version, pyramid geometry, config, sigmas, file hashes
    scale_<n>.pt       generator + discriminator state dicts for level n
    zstar.pt           the fixed reconstruction noise (coarsest scale)

Every file is written to a temporary name and renamed into place. Loading
verifies the SHA-256 of each listed file.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from pathlib import Path

import torch

from .exceptions import CheckpointError
from .imaging import pyramid_sizes
from .models import ScaleModel, TrainConfig, TrainedStack, build_scale_model

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _torch_bytes(obj) -> bytes:
    buf = io.BytesIO()
    torch.save(obj, buf)
    return buf.getvalue()


def save_checkpoint(stack: TrainedStack, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scales = []
    for model in sorted(stack.models, key=lambda m: m.index):
        name = f"scale_{model.index}.pt"
        payload = {
            "generator": model.generator.state_dict(),
            "discriminator": model.discriminator.state_dict(),
        }
        _atomic_write(directory / name, _torch_bytes(payload))
        scales.append(
            {
                "index": model.index,
                "file": name,
                "sha256": _sha256(directory / name),
                "sigma": model.sigma,
                "size": list(model.size),
            }
        )
    _atomic_write(directory / "zstar.pt", _torch_bytes(stack.zstar.clone()))
    cfg = stack.config
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_scales": stack.n_scales,
        "scale_factor": cfg.scale_factor,
        "min_dim": cfg.min_dim,
        "channels": stack.channels,
        "sizes": [list(s) for s in stack.sizes],
        "width": cfg.width,
        "branch_width": cfg.branch_width,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "sigmas": [m.sigma for m in sorted(stack.models, key=lambda m: -m.index)],
        "scales": scales,
        "zstar": {"file": "zstar.pt", "sha256": _sha256(directory / "zstar.pt")},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _atomic_write(directory / MANIFEST, text.encode("utf-8"))
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise CheckpointError(f"missing checkpoint manifest: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt manifest {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    return manifest


def _verified_load(directory: Path, name: str, digest: str):
    path = directory / name
    if not path.is_file():
        raise CheckpointError(f"checkpoint file missing: {path}")
    if _sha256(path) != digest:
        raise CheckpointError(f"hash verification failed for {path}")
    try:
        return torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # noqa: BLE001 - torch raises assorted types on bad pickles
        raise CheckpointError(f"cannot decode {path}: {exc}") from exc


def load_checkpoint(directory) -> TrainedStack:
    directory = Path(directory)
    manifest = read_manifest(directory)
    config = TrainConfig.from_mapping(manifest["config"])
    sizes = [tuple(s) for s in manifest["sizes"]]
    full = pyramid_sizes(*sizes[0], config.scale_factor, config.min_dim)
    if sizes != full[: len(sizes)]:
        raise CheckpointError(
            f"{directory}: level sizes {sizes} inconsistent with r={config.scale_factor}, "
            f"min_dim={config.min_dim}"
        )
    channels = int(manifest["channels"])
    models = []
    for entry in manifest["scales"]:
        state = _verified_load(directory, entry["file"], entry["sha256"])
        model = build_scale_model(entry["index"], tuple(entry["size"]), channels, config)
        try:
            model.generator.load_state_dict(state["generator"])
            model.discriminator.load_state_dict(state["discriminator"])
        except (KeyError, RuntimeError) as exc:
            raise CheckpointError(f"{entry['file']}: parameter mismatch: {exc}") from exc
        model.sigma = float(entry["sigma"])
        models.append(model.freeze())
    models.sort(key=lambda m: -m.index)
    zstar = _verified_load(directory, manifest["zstar"]["file"], manifest["zstar"]["sha256"])
    return TrainedStack(
        models=models, zstar=zstar, sizes=sizes, config=config, channels=channels
    )
