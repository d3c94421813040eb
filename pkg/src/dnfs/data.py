"""Synthetic layered-earth facies generator, boundary masks and dataset layout.

A dataset directory holds ``images/<id>.pgm``, ``masks/<id>.pgm`` and
``manifest.tsv`` with one ``split<TAB>id`` line per sample.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pgm import read_pgm, write_pgm

SPLITS = ("train", "val", "test")
RICKER_PEAK_FREQ = 0.1  # cycles per sample
MIN_HORIZON_GAP = 5
DEFAULT_NOISE = 0.1


@dataclass
class Sample:
    image: np.ndarray
    mask: np.ndarray
    id: str

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ in shape")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask must be binary")


@dataclass
class SplitManifest:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int = 0
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    extra: dict = field(default_factory=dict, repr=False)

    def split(self, name):
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def write(self, path):
        with open(path, "w") as fh:
            for name in SPLITS:
                for sid in self.split(name):
                    fh.write(f"{name}\t{sid}\n")

    @classmethod
    def read(cls, path):
        parts = {name: [] for name in SPLITS}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    name, sid = line.split("\t")
                    parts[name].append(sid)
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: expected 'split<TAB>id', got {line!r}") from exc
        return cls(parts["train"], parts["val"], parts["test"])


def _sample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_horizons(height, width, num_horizons, rng):
    """Sorted, non-crossing horizon depths, shape ``(num_horizons, width)``."""
    x = np.linspace(0.0, 1.0, width)
    margin = 4
    base = np.sort(rng.uniform(margin, height - margin, num_horizons))
    curves = np.empty((num_horizons, width))
    for k in range(num_horizons):
        y = np.full(width, base[k])
        for _ in range(rng.integers(1, 4)):
            amp = rng.uniform(0.5, 0.08 * height)
            freq = rng.uniform(0.3, 2.0)
            y += amp * np.sin(2 * np.pi * freq * x + rng.uniform(0, 2 * np.pi))
        curves[k] = y
    curves = np.rint(curves)
    # keep vertical order and a minimum gap, then clamp into the image
    for k in range(1, num_horizons):
        curves[k] = np.maximum(curves[k], curves[k - 1] + MIN_HORIZON_GAP)
    curves = np.clip(curves, 1, height - 1)
    return curves.astype(np.int64)


def labels_from_horizons(curves, height):
    rows = np.arange(height)[:, None]
    return (rows >= curves[:, None, :]).sum(axis=0).astype(np.int64)


def generate_facies_model(height, width, num_horizons, seed):
    """Integer facies map whose labels increase downward across ``num_horizons`` curves."""
    if height < 16 or width < 16:
        raise ValueError(f"facies model needs height and width >= 16, got {height}x{width}")
    if num_horizons < 1:
        raise ValueError("num_horizons must be >= 1")
    if (num_horizons + 1) * MIN_HORIZON_GAP > height:
        raise ValueError(f"{num_horizons} horizons do not fit in height {height}")
    rng = np.random.default_rng(seed)
    curves = generate_horizons(height, width, num_horizons, rng)
    return labels_from_horizons(curves, height)


def boundary_mask(labels, thickness=3):
    """1 where a 4-neighbour differs in label, dilated by a ``thickness`` square."""
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    labels = np.asarray(labels)
    edge = np.zeros(labels.shape, dtype=bool)
    dv = labels[1:, :] != labels[:-1, :]
    dh = labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= dv
    edge[:-1, :] |= dv
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    lo = -(thickness // 2)
    offsets = range(lo, lo + thickness)
    h, w = edge.shape
    out = np.zeros_like(edge)
    for dy in offsets:
        for dx in offsets:
            ys, yd = slice(max(0, -dy), h - max(0, dy)), slice(max(0, dy), h - max(0, -dy))
            xs, xd = slice(max(0, -dx), w - max(0, dx)), slice(max(0, dx), w - max(0, -dx))
            out[yd, xd] |= edge[ys, xs]
    return out.astype(np.uint8)


def ricker(peak_freq=RICKER_PEAK_FREQ, half_length=None):
    """Ricker wavelet sampled at unit spacing, centred on index ``half_length``."""
    if half_length is None:
        half_length = int(np.ceil(1.5 / peak_freq))
    t = np.arange(-half_length, half_length + 1, dtype=np.float64)
    a = (np.pi * peak_freq * t) ** 2
    return (1 - 2 * a) * np.exp(-a)


def ricker_half_width(peak_freq=RICKER_PEAK_FREQ):
    """Half the Ricker breadth (side-lobe trough to side-lobe trough), rounded up."""
    return int(np.ceil(np.sqrt(6.0) / (2 * np.pi * peak_freq)))


def seismic_trace(labels, rng, peak_freq=RICKER_PEAK_FREQ):
    """Noise-free amplitude section: impedance steps convolved with a Ricker wavelet."""
    labels = np.asarray(labels)
    n_facies = int(labels.max()) + 1
    # adjacent facies always differ by a visible contrast of random sign
    steps = rng.uniform(0.5, 1.5, n_facies) * rng.choice([-1.0, 1.0], n_facies)
    impedance = np.cumsum(steps)[labels]
    reflectivity = np.zeros(labels.shape)
    reflectivity[1:] = np.diff(impedance, axis=0)
    wavelet = ricker(peak_freq)
    half = wavelet.size // 2
    # full convolution cropped to the centre; "same" mode breaks when the column is shorter than the wavelet
    full = np.apply_along_axis(np.convolve, 0, reflectivity, wavelet)
    return full[half : half + labels.shape[0]]


def render_seismic(labels, noise_level=DEFAULT_NOISE, seed=0, peak_freq=RICKER_PEAK_FREQ):
    """Pseudo-seismic amplitude image in [0, 1] for a facies label map.

    Gaussian noise with standard deviation ``noise_level`` times the peak
    clean amplitude is added before min-max normalization. A constant image
    normalizes to 0.5.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    rng = np.random.default_rng(seed)
    trace = seismic_trace(labels, rng, peak_freq)
    peak = np.abs(trace).max()
    if noise_level > 0 and peak > 0:
        trace = trace + rng.normal(0.0, noise_level * peak, trace.shape)
    lo, hi = trace.min(), trace.max()
    if hi - lo <= 0:
        return np.full(trace.shape, 0.5)
    return (trace - lo) / (hi - lo)


def make_sample(index, seed, size=64, num_horizons=4, thickness=3, noise_level=DEFAULT_NOISE):
    rng = _sample_rng(seed, index)
    model_seed, render_seed = rng.integers(0, 2**63, size=2)
    labels = generate_facies_model(size, size, num_horizons, model_seed)
    image = render_seismic(labels, noise_level, render_seed)
    return Sample(image=image, mask=boundary_mask(labels, thickness), id=f"s{index:05d}")


def split_dataset(ids, fractions=(0.8, 0.1, 0.1), seed=0):
    """Shuffle ``ids`` deterministically and cut train/val/test by ``fractions``.

    Validation and test counts are rounded; train takes the remainder.
    """
    ids = [s.id if isinstance(s, Sample) else s for s in ids]
    if len(ids) < 3:
        raise ValueError(f"need at least 3 samples to split, got {len(ids)}")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_val = int(round(fractions[1] * len(ids)))
    n_test = int(round(fractions[2] * len(ids)))
    n_train = len(ids) - n_val - n_test
    return SplitManifest(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
        fractions=fractions,
    )


def write_dataset(root, n_samples, seed=0, size=64, num_horizons=4, thickness=3,
                  noise_level=DEFAULT_NOISE, fractions=(0.8, 0.1, 0.1)):
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    for index in range(n_samples):
        sample = make_sample(index, seed, size, num_horizons, thickness, noise_level)
        write_pgm(root / "images" / f"{sample.id}.pgm", sample.image)
        write_pgm(root / "masks" / f"{sample.id}.pgm", sample.mask, mask=True)
        ids.append(sample.id)
    manifest = split_dataset(ids, fractions, seed)
    manifest.write(root / "manifest.tsv")
    return manifest


def load_split(root, split):
    """Images and masks of one split as ``(N, 1, H, W)`` arrays plus ids."""
    root = Path(root)
    manifest_path = root / "manifest.tsv"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"dataset manifest not found: {manifest_path}")
    ids = SplitManifest.read(manifest_path).split(split)
    if not ids:
        raise ValueError(f"split {split!r} of {root} is empty")
    images = np.stack([read_pgm(root / "images" / f"{sid}.pgm") for sid in ids])
    masks = np.stack([read_pgm(root / "masks" / f"{sid}.pgm", mask=True) for sid in ids])
    return images[:, None].astype(np.float32), masks[:, None].astype(np.float32), ids


def dataset_exists(root):
    return os.path.isfile(os.path.join(root, "manifest.tsv"))
