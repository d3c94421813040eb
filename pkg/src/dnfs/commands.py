"""Implementations behind the ``dnfs`` command-line subcommands."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .arch import build, count_parameters, parse_preset, with_input_size
from .data import dataset_exists, load_split, write_dataset
from .graph import OptimizerState, init_parameters
from .losses import LossConfig
from .pgm import read_pgm, write_pgm
from .training import evaluate, predict_proba, train_epoch

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "val_loss", "val_iou", "val_black_recall"]
SWEEP_HEADER = ["arch", "multiplier", "psi", "params", "train_seconds", "val_iou", "val_black_recall"]
RNG_DESCRIPTOR = "pcg64(seed,epoch)"


class CommandError(RuntimeError):
    pass


def cmd_generate(cfg):
    root = Path(cfg.dataset)
    try:
        manifest = write_dataset(
            root, cfg.n_samples, seed=cfg.seed, size=cfg.image_size, num_horizons=cfg.num_horizons,
            thickness=cfg.thickness, noise_level=cfg.noise_level, fractions=cfg.fractions,
        )
    except OSError as exc:
        raise CommandError(f"cannot write dataset to {root}: {exc}") from exc
    log.info("wrote %d samples to %s", cfg.n_samples, root)
    return manifest


def _fmt(value):
    return repr(float(value))


def _run_meta(cfg, best_iou):
    return {
        "seed": cfg.seed,
        "psi": _fmt(cfg.psi),
        "smooth_eps": _fmt(cfg.smooth_eps),
        "threshold": _fmt(cfg.threshold),
        "batch_size": cfg.batch_size,
        "best_val_iou": _fmt(best_iou),
        "rng": RNG_DESCRIPTOR,
    }


def _config_from_checkpoint(ckpt, cfg):
    meta = ckpt.meta
    return replace(
        cfg,
        arch=ckpt.spec.family,
        multiplier=ckpt.spec.multiplier,
        depth=ckpt.spec.depth,
        seed=int(meta["seed"]),
        psi=float(meta["psi"]),
        smooth_eps=float(meta["smooth_eps"]),
        threshold=float(meta["threshold"]),
        batch_size=int(meta["batch_size"]),
        learning_rate=ckpt.optimizer.lr,
    )


def _rewrite_metrics(path, keep_through_epoch):
    rows = []
    if path.exists():
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if int(r["epoch"]) <= keep_through_epoch]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for r in rows:
            writer.writerow([r[k] for k in METRICS_HEADER])


def cmd_train(cfg, resume=None):
    """Train from scratch (or from ``resume``) up to ``cfg.epochs``.

    Writes ``metrics.csv``, ``epoch_NNNN.ckpt``, ``last.ckpt`` and
    ``best.ckpt`` into ``cfg.output``. Returns a summary dict.
    """
    if not dataset_exists(cfg.dataset):
        raise CommandError(f"dataset not found: {cfg.dataset} (no manifest.tsv; run 'dnfs generate' first)")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"

    if resume:
        state = ckpt_io.load(resume)
        cfg = _config_from_checkpoint(state, cfg)
        start_epoch = state.epoch
        best_iou = float(state.meta.get("best_val_iou", "-inf"))
        opt = state.optimizer
    else:
        start_epoch, best_iou = 0, float("-inf")

    x_train, y_train, _ = load_split(cfg.dataset, "train")
    x_val, y_val, _ = load_split(cfg.dataset, "val")
    size = x_train.shape[2]
    if resume:
        net = state.network(size)
    else:
        net = init_parameters(build(cfg.arch_spec(), size), cfg.seed)
        opt = OptimizerState.for_network(net, lr=cfg.learning_rate)
    loss_cfg = cfg.loss_config()

    _rewrite_metrics(metrics_path, start_epoch)

    def save(name, epoch):
        ckpt_io.save(out / name, ckpt_io.Checkpoint.capture(net, opt, epoch, **_run_meta(cfg, best_iou)))

    if not resume:
        save("epoch_0000.ckpt", 0)
        save("last.ckpt", 0)

    last_row = None
    seconds = 0.0
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        tic = time.perf_counter()
        train_loss = train_epoch(net, opt, x_train, y_train, loss_cfg, cfg.batch_size, cfg.seed, epoch)
        seconds += time.perf_counter() - tic
        val = evaluate(net, x_val, y_val, loss_cfg, cfg.batch_size)
        last_row = [epoch, train_loss, val["loss"], val["iou"], val["black_recall"]]
        with open(metrics_path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow([epoch] + [_fmt(v) for v in last_row[1:]])
        improved = val["iou"] > best_iou
        if improved:
            best_iou = val["iou"]
        save(f"epoch_{epoch:04d}.ckpt", epoch)
        save("last.ckpt", epoch)
        if improved:
            save("best.ckpt", epoch)
        log.info("epoch %d train_loss=%.4f val_iou=%.4f val_black_recall=%.4f",
                 epoch, train_loss, val["iou"], val["black_recall"])
    return {
        "params": count_parameters(net),
        "train_seconds": seconds,
        "final": dict(zip(METRICS_HEADER, last_row)) if last_row else None,
        "best_val_iou": best_iou,
    }


def cmd_eval(checkpoint, dataset, split="val", output=None, threshold=None):
    state = ckpt_io.load(checkpoint)
    images, masks, _ = load_split(dataset, split)
    try:
        net = state.network(images.shape[2])
        net = with_input_size(net, *images.shape[2:])
    except (ValueError, ckpt_io.CheckpointError) as exc:
        raise CommandError(f"checkpoint {checkpoint} does not fit dataset {dataset}: {exc}") from exc
    meta = state.meta
    cfg = LossConfig(
        psi=float(meta.get("psi", 0.5)),
        smooth_eps=float(meta.get("smooth_eps", 1.0)),
        threshold=float(threshold if threshold is not None else meta.get("threshold", 0.5)),
    )
    result = evaluate(net, images, masks, cfg, int(meta.get("batch_size", 8)))
    report = {"split": split, "n": len(images), "iou": result["iou"], "black_recall": result["black_recall"],
              "loss": result["loss"], "checkpoint": str(checkpoint)}
    target = Path(output) if output else Path(checkpoint).parent
    target.mkdir(parents=True, exist_ok=True)
    with open(target / f"eval_{split}.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def cmd_predict(checkpoint, image_path, out_path, threshold=None):
    state = ckpt_io.load(checkpoint)
    image = read_pgm(image_path)
    multiple = state.spec.size_multiple
    h, w = image.shape
    if h % multiple or w % multiple:
        raise CommandError(f"image {image_path} is {h}x{w}; height and width must be multiples of {multiple}")
    net = with_input_size(state.network(), h, w)
    thr = float(threshold if threshold is not None else state.meta.get("threshold", 0.5))
    probs = predict_proba(net, image[None, None])[0, 0]
    mask = (probs >= thr).astype(np.uint8)
    write_pgm(out_path, mask, mask=True)
    return mask


def cmd_count_params(names):
    counts = {}
    for name in names:
        try:
            spec = parse_preset(name)
        except KeyError as exc:
            raise CommandError(exc.args[0]) from exc
        counts[name] = count_parameters(build(spec))
    return counts


def cmd_sweep(cfg, multipliers, psis, archs=("dnfs",)):
    """Train every (arch, multiplier, psi) cell and write ``sweep.csv``."""
    if not multipliers or not psis or not archs:
        raise CommandError("sweep needs at least one arch, multiplier and psi")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for arch in sorted(archs):
        for m in sorted(multipliers):
            for psi in sorted(psis):
                cell = f"{arch.replace('_', '-')}-m{m}-psi{psi:g}"
                row = {"arch": arch, "multiplier": m, "psi": _fmt(psi)}
                try:
                    cell_cfg = replace(cfg, arch=arch, multiplier=m, psi=psi, output=str(out / cell))
                    row["params"] = count_parameters(build(cell_cfg.arch_spec()))
                    summary = cmd_train(cell_cfg)
                    final = summary["final"] or {}
                    row["train_seconds"] = f"{summary['train_seconds']:.3f}"
                    row["val_iou"] = _fmt(final.get("val_iou", float("nan")))
                    row["val_black_recall"] = _fmt(final.get("val_black_recall", float("nan")))
                except Exception as exc:  # a failed cell must not stop the sweep
                    log.error("sweep cell %s failed: %s", cell, exc)
                    row.setdefault("params", "failed")
                    for key in ("train_seconds", "val_iou", "val_black_recall"):
                        row[key] = "failed"
                rows.append(row)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_HEADER, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return rows

