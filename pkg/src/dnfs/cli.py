"""``dnfs`` command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

from . import commands
from .arch import preset_names
from .config import load_config

ERROR_PREFIX = "dnfs: error:"


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def _add_run_options(p, generation=False):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--seed", type=int)
    if generation:
        p.add_argument("--n-samples", dest="n_samples", type=int)
        p.add_argument("--image-size", dest="image_size", type=int)
        p.add_argument("--thickness", type=int)
        p.add_argument("--num-horizons", dest="num_horizons", type=int)
        p.add_argument("--noise-level", dest="noise_level", type=float)
        p.add_argument("--fractions", help="train,val,test fractions, e.g. 0.8,0.1,0.1")
        return
    p.add_argument("--output", help="run output directory")
    p.add_argument("--arch", help="family (dnfs, unet_like) or preset (dnfs-8, unet-like-16)")
    p.add_argument("--multiplier", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--psi", type=float)
    p.add_argument("--smooth-eps", dest="smooth_eps", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)


RUN_KEYS = (
    "dataset", "seed", "n_samples", "image_size", "thickness", "num_horizons", "noise_level",
    "fractions", "output", "arch", "multiplier", "depth", "psi", "smooth_eps", "threshold",
    "learning_rate", "batch_size", "epochs",
)


def _config(args):
    overrides = {k: getattr(args, k) for k in RUN_KEYS if hasattr(args, k)}
    return load_config(args.config, **overrides)


def build_parser():
    parser = argparse.ArgumentParser(prog="dnfs", description="Seismic facies boundary segmentation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_run_options(p, generation=True)

    p = sub.add_parser("train", help="train a network")
    _add_run_options(p)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="val", choices=("train", "val", "test"))
    p.add_argument("--output", help="directory for eval_<split>.json (default: checkpoint directory)")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("predict", help="write a thresholded boundary mask for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("count-params", help="print exact parameter counts of presets")
    p.add_argument("presets", nargs="*", help=f"preset names (default: all). Known: {', '.join(preset_names())}")

    p = sub.add_parser("sweep", help="train a multiplier x psi grid and write sweep.csv")
    _add_run_options(p)
    p.add_argument("--multipliers", type=_ints, default=[4, 8])
    p.add_argument("--psis", type=_floats, default=[0.5])
    p.add_argument("--archs", default="dnfs", help="comma-separated families (dnfs, unet_like)")
    return parser


def run(args):
    if args.command == "generate":
        cfg = _config(args)
        manifest = commands.cmd_generate(cfg)
        print(f"{cfg.dataset}: train={len(manifest.train)} val={len(manifest.val)} test={len(manifest.test)}")
    elif args.command == "train":
        summary = commands.cmd_train(_config(args), resume=args.resume)
        final = summary["final"]
        if final:
            print(f"epoch={final['epoch']} train_loss={final['train_loss']:.6f} "
                  f"val_iou={final['val_iou']:.6f} val_black_recall={final['val_black_recall']:.6f}")
        print(f"params={summary['params']} train_seconds={summary['train_seconds']:.2f}")
    elif args.command == "eval":
        report = commands.cmd_eval(args.checkpoint, args.dataset, args.split, args.output, args.threshold)
        print(f"split={report['split']} n={report['n']} iou={report['iou']:.6f} "
              f"black_recall={report['black_recall']:.6f}")
    elif args.command == "predict":
        commands.cmd_predict(args.checkpoint, args.image, args.out, args.threshold)
        print(args.out)
    elif args.command == "count-params":
        for name, count in commands.cmd_count_params(args.presets or preset_names()).items():
            print(f"{name}\t{count}")
    elif args.command == "sweep":
        rows = commands.cmd_sweep(_config(args), args.multipliers, args.psis, args.archs.split(","))
        print(f"{len(rows)} cells written to {_config(args).output}/sweep.csv")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        run(args)
    except (commands.CommandError, ValueError, OSError, KeyError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"{ERROR_PREFIX} {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
