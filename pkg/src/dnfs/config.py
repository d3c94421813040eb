"""Run configuration: ``key = value`` files with ``#`` comments, overridable by flags."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .arch import ArchSpec, parse_preset
from .losses import LossConfig


@dataclass(frozen=True)
class RunConfig:
    arch: str = "dnfs"  # family ("dnfs", "unet_like") or preset ("dnfs-8")
    multiplier: int = 4
    depth: int = 3
    psi: float = 0.5
    smooth_eps: float = 1.0
    threshold: float = 0.5
    learning_rate: float = 3e-3
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    dataset: str = "data"
    output: str = "run"
    # generation only
    n_samples: int = 200
    image_size: int = 64
    thickness: int = 3
    num_horizons: int = 4
    noise_level: float = 0.1
    fractions: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("batch_size must be >= 1, epochs >= 0 and learning_rate > 0")
        if self.n_samples < 3 or self.thickness < 1 or self.num_horizons < 1 or self.noise_level < 0:
            raise ValueError("n_samples >= 3, thickness >= 1, num_horizons >= 1 and noise_level >= 0 required")
        self.arch_spec()
        self.loss_config()
        if self.image_size % self.arch_spec().size_multiple:
            raise ValueError(f"image_size {self.image_size} must be a multiple of {self.arch_spec().size_multiple}")

    def arch_spec(self):
        if "-" in self.arch:
            return parse_preset(self.arch, self.depth)
        return ArchSpec(self.arch, self.multiplier, self.depth)

    def loss_config(self):
        return LossConfig(self.psi, self.smooth_eps, self.threshold)

    def as_dict(self):
        return asdict(self)


def _coerce(name, text):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "tuple":
        return tuple(float(v) for v in str(text).split(","))
    return str(text)


def parse_config_text(text, source="<config>"):
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, **overrides):
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read(), str(path)))
    values.update({k: _coerce(k, v) if isinstance(v, str) else v for k, v in overrides.items() if v is not None})
    return replace(RunConfig(), **values)
