"""DNFS and U-Net-like builders, presets and parameter counting.

Both families share one topology: ``depth`` encoder levels of
conv + relu + 2x2 max pool (widths ``m * 2**level``), a bottleneck at width
``m * 2**depth``, and a decoder that upsamples with a stride-2 transposed
convolution, concatenates the matching encoder skip and convolves back to the
skip width. The head is a 1x1 convolution to one channel followed by sigmoid.

DNFS uses one convolution per block and a single bottleneck layer; the
U-Net-like reference uses two everywhere.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .graph import Layer, Network
from .tensor import ConvParams

FAMILIES = ("dnfs", "unet_like")
PRESET_MULTIPLIERS = (1, 2, 4, 8, 16, 32, 64, 128)

# decoder upsampler: 3x3, stride 2, padding 1, output_padding 1 doubles H and W
UP_KERNEL, UP_STRIDE, UP_PADDING, UP_OUTPUT_PADDING = 3, 2, 1, 1


@dataclass(frozen=True)
class ArchSpec:
    family: str = "dnfs"
    multiplier: int = 4
    depth: int = 3
    input_channels: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        for field_name in ("multiplier", "depth", "input_channels"):
            value = getattr(self, field_name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{field_name} must be a positive integer, got {value!r}")

    @property
    def size_multiple(self):
        return 2**self.depth

    def to_string(self):
        return (
            f"family={self.family};multiplier={self.multiplier};"
            f"depth={self.depth};input_channels={self.input_channels}"
        )

    @classmethod
    def from_string(cls, text):
        fields = dict(item.split("=", 1) for item in text.split(";") if item)
        return cls(
            family=fields["family"],
            multiplier=int(fields["multiplier"]),
            depth=int(fields["depth"]),
            input_channels=int(fields["input_channels"]),
        )


def preset_names():
    return [f"{prefix}-{m}" for prefix in ("dnfs", "unet-like") for m in PRESET_MULTIPLIERS]


def parse_preset(name, depth=3, input_channels=1):
    """``"dnfs-8"`` / ``"unet-like-16"`` -> :class:`ArchSpec`."""
    match = re.fullmatch(r"(dnfs|unet-like)-(\d+)", name)
    if not match or int(match.group(2)) not in PRESET_MULTIPLIERS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    family = match.group(1).replace("-", "_")
    return ArchSpec(family, int(match.group(2)), depth, input_channels)


def preset_name(spec):
    return f"{spec.family.replace('_', '-')}-{spec.multiplier}"


def _conv(cin, cout, k=3, padding=1):
    return ConvParams(
        np.zeros((cout, cin, k, k), dtype=np.float32),
        np.zeros(cout, dtype=np.float32),
        stride=1,
        padding=padding,
    )


def _up(cin, cout):
    return ConvParams(
        np.zeros((cout, cin, UP_KERNEL, UP_KERNEL), dtype=np.float32),
        np.zeros(cout, dtype=np.float32),
        stride=UP_STRIDE,
        padding=UP_PADDING,
        output_padding=UP_OUTPUT_PADDING,
    )


def _block(layers, prefix, cin, cout, n_convs):
    for i in range(1, n_convs + 1):
        layers.append(Layer("conv", f"{prefix}.conv{i}", _conv(cin if i == 1 else cout, cout)))
        layers.append(Layer("relu", f"{prefix}.relu{i}"))


def _build(spec, n_convs, image_size):
    m, depth = spec.multiplier, spec.depth
    layers = []
    cin = spec.input_channels
    for level in range(depth):
        width = m * 2**level
        _block(layers, f"enc{level + 1}", cin, width, n_convs)
        layers.append(Layer("concat_skip_source", f"enc{level + 1}.skip"))
        layers.append(Layer("maxpool", f"enc{level + 1}.pool"))
        cin = width
    _block(layers, "bottleneck", cin, m * 2**depth, n_convs)
    cin = m * 2**depth
    for level in reversed(range(depth)):
        width = m * 2**level
        prefix = f"dec{level + 1}"
        layers.append(Layer("conv_transpose", f"{prefix}.up", _up(cin, width)))
        layers.append(Layer("concat_skip_sink", f"{prefix}.cat", skip_from=f"enc{level + 1}.skip"))
        _block(layers, prefix, 2 * width, width, n_convs)
        cin = width
    layers.append(Layer("output_head", "head", _conv(cin, 1, k=1, padding=0)))
    layers.append(Layer("sigmoid", "head.sigmoid"))
    size = image_size or spec.size_multiple
    if size % spec.size_multiple:
        raise ValueError(f"image size {size} must be a multiple of {spec.size_multiple}")
    return Network(layers, (spec.input_channels, size, size), spec=spec)


def build_dnfs(spec, image_size=None):
    if spec.family != "dnfs":
        raise ValueError(f"build_dnfs needs family 'dnfs', got {spec.family!r}")
    return _build(spec, 1, image_size)


def build_unet_like(spec, image_size=None):
    if spec.family != "unet_like":
        raise ValueError(f"build_unet_like needs family 'unet_like', got {spec.family!r}")
    return _build(spec, 2, image_size)


def build(spec, image_size=None):
    if spec.family == "dnfs":
        return build_dnfs(spec, image_size)
    return build_unet_like(spec, image_size)


def with_input_size(net, height, width):
    """Rebind ``net`` to a new spatial input size (layers are shared)."""
    multiple = net.spec.size_multiple if net.spec else 1
    if height % multiple or width % multiple or height < 1 or width < 1:
        raise ValueError(f"image size {height}x{width} must be a positive multiple of {multiple} in both dimensions")
    if net.input_shape[1:] == (height, width):
        return net
    return Network(net.layers, (net.input_shape[0], height, width), spec=net.spec)


def count_parameters(net):
    """Exact count from the per-layer formulas.

    conv: ``(K*K*C_in + 1) * C_out``; transposed conv: ``K*K*C_in*C_out + C_out``.
    """
    total = 0
    for layer in net.parametric_layers():
        cv = layer.conv
        k2 = cv.size * cv.size
        if layer.kind == "conv_transpose":
            total += k2 * cv.in_channels * cv.out_channels + cv.out_channels
        else:
            total += (k2 * cv.in_channels + 1) * cv.out_channels
    return total
