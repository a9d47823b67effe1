"""Command line entry point: ``texinspect {train,inspect,eval,synth}``.

Every verb accepts ``--config FILE`` with ``key = value`` lines; explicit
flags override values from the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .exceptions import CheckpointError, ImageFormatError, ParameterError, TrainingError

EXIT_OK = 0
EXIT_EMPTY = 2
EXIT_ERROR = 1

INSPECT_KEYS = ("threshold", "entropy_sign")


def _file_config(path):
    from .harness import parse_config_file

    return parse_config_file(path) if path else {}


def _inspect_options(args) -> dict:
    values = {k.replace("-", "_"): v for k, v in _file_config(args.config).items()}
    unknown = set(values) - set(INSPECT_KEYS)
    if unknown:
        raise ParameterError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    opts = {"threshold": "otsu", "entropy_sign": "saliency", **values}
    if args.threshold is not None:
        opts["threshold"] = args.threshold
    if args.entropy_sign is not None:
        opts["entropy_sign"] = args.entropy_sign
    return opts


def cmd_train(args) -> int:
    from .imaging import load_image
    from .models import TrainConfig
    from .training import train_stack

    values = dict(_file_config(args.config))
    overrides = {
        "n_scales": args.scales,
        "scale_factor": args.r,
        "iterations": args.iters,
        "seed": args.seed,
        "image_size": args.size,
        "min_dim": args.min_dim,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if args.shared_branches:
        values["shared_branches"] = True
    if args.no_texture_module:
        values["texture_module"] = False
    config = TrainConfig.from_mapping(values)
    image = load_image(args.image, config.image_size)
    stack = train_stack(image, config, out_dir=args.out)
    print(f"trained {stack.n_scales} scales {stack.sizes} -> {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .checkpoint import load_checkpoint
    from .imaging import load_image
    from .inspection import inspect

    opts = _inspect_options(args)
    stack = load_checkpoint(args.model)
    image = load_image(args.image, tuple(stack.sizes[0]))
    result = inspect(stack, image, policy=opts["threshold"], mode=opts["entropy_sign"])
    written = result.save(args.out, per_scale=args.per_scale)
    print(f"defect pixels: {int(result.mask.sum())} / {result.mask.size}")
    for path in written:
        print(path)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import evaluate_dataset

    opts = _inspect_options(args)
    report = evaluate_dataset(
        args.model, args.images, args.masks, policy=opts["threshold"], mode=opts["entropy_sign"]
    )
    report.write(args.report)
    sys.stdout.write(report.to_table())
    return EXIT_OK if report.rows else EXIT_EMPTY


def cmd_synth(args) -> int:
    from .harness import parse_config_file
    from .imaging import SynthSpec, save_image, save_mask, synth_texture_sample

    values = parse_config_file(args.spec) if args.spec else {}
    count = int(values.pop("count", args.count))
    names = {f.name: f for f in dataclasses.fields(SynthSpec)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            raise ParameterError(f"unknown synth key {key!r}")
        kwargs[key] = type(getattr(SynthSpec(), key))(raw)
    base = SynthSpec(**kwargs)
    out = Path(args.out)
    for k in range(count):
        spec = dataclasses.replace(base, seed=base.seed + k)
        image, mask = synth_texture_sample(spec)
        name = f"{spec.family}_{spec.seed:04d}.png"
        save_image(image, out / "images" / name)
        save_mask(mask, out / "masks" / name)
    print(f"wrote {count} samples to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texinspect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the pyramid on one normal image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--scales", type=int, help="keep only the finest N pyramid levels")
    p.add_argument("--r", type=float, help="pyramid scale factor")
    p.add_argument("--iters", type=int, help="iterations per scale")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, help="training resolution (square)")
    p.add_argument("--min-dim", type=int)
    p.add_argument("--shared-branches", action="store_true", help="one branch shared by all directions")
    p.add_argument("--no-texture-module", action="store_true", help="stem-only discriminator")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (
        ("inspect", cmd_inspect, "localise defects in one image"),
        ("eval", cmd_eval, "score a directory of images against masks"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", required=True)
        p.add_argument("--config")
        p.add_argument("--threshold", help="otsu or pXX (percentile)")
        p.add_argument("--entropy-sign", choices=("saliency", "literal"))
        if name == "inspect":
            p.add_argument("--image", required=True)
            p.add_argument("--out", required=True)
            p.add_argument("--per-scale", action="store_true", help="also write H_<n>.png per scale")
        else:
            p.add_argument("--images", required=True)
            p.add_argument("--masks", required=True)
            p.add_argument("--report", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="render synthetic textures with defects")
    p.add_argument("--spec")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ParameterError, ImageFormatError, CheckpointError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
