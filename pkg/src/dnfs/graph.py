"""Sequential-with-skips networks, He initialization and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ConvParams, ShapeError

LAYER_KINDS = (
    "conv",
    "conv_transpose",
    "maxpool",
    "relu",
    "sigmoid",
    "concat_skip_source",
    "concat_skip_sink",
    "output_head",
)
PARAMETRIC = ("conv", "conv_transpose", "output_head")


@dataclass
class Layer:
    kind: str
    name: str
    conv: ConvParams | None = None
    skip_from: str | None = None  # concat_skip_sink only
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if (self.kind in PARAMETRIC) != (self.conv is not None):
            raise ValueError(f"layer {self.name!r}: conv params required iff kind is parametric")
        if self.conv is not None and not self.grads:
            self.zero_grad()

    def zero_grad(self):
        if self.conv is not None:
            self.grads = {
                "kernel": np.zeros_like(self.conv.kernel),
                "bias": np.zeros_like(self.conv.bias),
            }


class Network:
    """Ordered layer list; skip edges run from a source layer to a later sink.

    The constructor runs a shape-only dry pass on a batch of one, so an
    instance is guaranteed to accept inputs of ``input_shape``.
    """

    def __init__(self, layers, input_shape, spec=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.spec = spec
        self._grads_ready = False
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        seen_sources = set()
        used_sources = set()
        for layer in self.layers:
            if layer.kind == "concat_skip_source":
                seen_sources.add(layer.name)
            elif layer.kind == "concat_skip_sink":
                if layer.skip_from not in seen_sources:
                    raise ValueError(f"sink {layer.name!r} references unknown or later source {layer.skip_from!r}")
                if layer.skip_from in used_sources:
                    raise ValueError(f"source {layer.skip_from!r} feeds more than one sink")
                used_sources.add(layer.skip_from)
        self.output_shape = self._infer_shape()

    def _infer_shape(self):
        c, h, w = self.input_shape
        skips = {}
        for layer in self.layers:
            kind = layer.kind
            if kind in ("conv", "output_head"):
                if layer.conv.in_channels != c:
                    raise ShapeError(f"{layer.name}: expects {layer.conv.in_channels} channels, gets {c}")
                k, s, p = layer.conv.size, layer.conv.stride, layer.conv.padding
                c = layer.conv.out_channels
                h, w = T.conv_output_size(h, k, s, p), T.conv_output_size(w, k, s, p)
            elif kind == "conv_transpose":
                cv = layer.conv
                if cv.in_channels != c:
                    raise ShapeError(f"{layer.name}: expects {cv.in_channels} channels, gets {c}")
                c = cv.out_channels
                h = T.conv_transpose_output_size(h, cv.size, cv.stride, cv.padding, cv.output_padding)
                w = T.conv_transpose_output_size(w, cv.size, cv.stride, cv.padding, cv.output_padding)
            elif kind == "maxpool":
                if h % 2 or w % 2:
                    raise ShapeError(f"{layer.name}: odd spatial size {h}x{w} before pooling")
                h, w = h // 2, w // 2
            elif kind == "concat_skip_source":
                skips[layer.name] = (c, h, w)
            elif kind == "concat_skip_sink":
                sc, sh, sw = skips[layer.skip_from]
                if (sh, sw) != (h, w):
                    raise ShapeError(f"{layer.name}: skip {sh}x{sw} does not match {h}x{w}")
                c += sc
        return (c, h, w)

    # parameter views -------------------------------------------------

    def parametric_layers(self):
        return [layer for layer in self.layers if layer.conv is not None]

    def parameters(self):
        """``{"<layer>.kernel": array, "<layer>.bias": array}`` in layer order."""
        out = {}
        for layer in self.parametric_layers():
            out[f"{layer.name}.kernel"] = layer.conv.kernel
            out[f"{layer.name}.bias"] = layer.conv.bias
        return out

    def gradients(self):
        out = {}
        for layer in self.parametric_layers():
            out[f"{layer.name}.kernel"] = layer.grads["kernel"]
            out[f"{layer.name}.bias"] = layer.grads["bias"]
        return out

    def flat_parameters(self):
        return np.concatenate([p.ravel() for p in self.parameters().values()])

    def set_flat_parameters(self, flat):
        flat = np.asarray(flat)
        offset = 0
        for arr in self.parameters().values():
            arr[...] = flat[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        if offset != flat.size:
            raise ShapeError(f"expected {offset} parameters, got {flat.size}")

    def flat_gradients(self):
        return np.concatenate([g.ravel() for g in self.gradients().values()])

    def zero_grad(self):
        for layer in self.parametric_layers():
            layer.zero_grad()
        self._grads_ready = False

    def astype(self, dtype):
        """Cast parameters and gradient stores in place; returns ``self``."""
        for layer in self.parametric_layers():
            layer.conv.kernel = layer.conv.kernel.astype(dtype)
            layer.conv.bias = layer.conv.bias.astype(dtype)
            layer.zero_grad()
        return self

    @property
    def dtype(self):
        layers = self.parametric_layers()
        return layers[0].conv.kernel.dtype if layers else np.dtype(np.float32)


def init_parameters(net, seed):
    """He-normal kernels (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    dtype = net.dtype
    for layer in net.parametric_layers():
        cv = layer.conv
        std = np.sqrt(2.0 / (cv.in_channels * cv.size * cv.size))
        cv.kernel = (rng.standard_normal(cv.kernel.shape) * std).astype(dtype)
        cv.bias = np.zeros(cv.out_channels, dtype=dtype)
        layer.zero_grad()
    net._grads_ready = False
    return net


def forward(net, x, mode="train"):
    """Run the network. Returns ``(output, cache)``; cache is None in eval mode."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = T.check_tensor(x)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match network input {net.input_shape}")
    x = x.astype(net.dtype, copy=False)
    train = mode == "train"
    cache = [] if train else None
    skips = {}
    for layer in net.layers:
        kind = layer.kind
        aux = None
        if kind in ("conv", "output_head"):
            y = T.conv2d_forward(x, layer.conv)
        elif kind == "conv_transpose":
            y = T.conv_transpose2d_forward(x, layer.conv)
        elif kind == "maxpool":
            y, aux = T.maxpool2(x)
        elif kind == "relu":
            y = T.relu(x)
        elif kind == "sigmoid":
            y = T.sigmoid(x)
        elif kind == "concat_skip_source":
            skips[layer.name] = x
            y = x
        else:
            skip = skips.pop(layer.skip_from)
            y = T.concat_channels(x, skip)
            aux = x.shape[1]
        if train:
            cache.append((x, y, aux))
        x = y
    return x, cache


def backward(net, cache, grad_output):
    """Accumulate parameter gradients into each layer's store.

    Returns the gradient dictionary (same keys as ``net.parameters()``).
    """
    if cache is None or len(cache) != len(net.layers):
        raise ValueError("backward needs the cache of a train-mode forward pass")
    final = cache[-1][1]
    if grad_output.shape != final.shape:
        raise ShapeError(f"grad_output shape {grad_output.shape} does not match output {final.shape}")
    g = grad_output.astype(final.dtype, copy=False)
    pending = {}
    for layer, (x, y, aux) in zip(reversed(net.layers), reversed(cache)):
        kind = layer.kind
        if kind in ("conv", "output_head"):
            g, gk, gb = T.conv2d_backward(x, layer.conv, g)
            layer.grads["kernel"] += gk
            layer.grads["bias"] += gb
        elif kind == "conv_transpose":
            g, gk, gb = T.conv_transpose2d_backward(x, layer.conv, g)
            layer.grads["kernel"] += gk
            layer.grads["bias"] += gb
        elif kind == "maxpool":
            g = T.maxpool2_backward(aux, g)
        elif kind == "relu":
            g = T.relu_backward(x, g)
        elif kind == "sigmoid":
            g = T.sigmoid_backward(y, g)
        elif kind == "concat_skip_sink":
            g, pending[layer.skip_from] = T.split_channels(g, aux)
        else:
            g = g + pending.pop(layer.name)
    net._grads_ready = True
    return net.gradients()


@dataclass
class OptimizerState:
    """Adam moments keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_network(cls, net, **hyper):
        state = cls(**hyper)
        for name, p in net.parameters().items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state

    def update(self, params, grads):
        """Apply one bias-corrected Adam step to ``params`` in place."""
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.step
        c2 = 1 - b2**self.step
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            if m.shape != p.shape:
                raise ShapeError(f"optimizer state for {name} has shape {m.shape}, parameter {p.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            step = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p -= step.astype(p.dtype, copy=False)


def optimizer_step(net, state):
    if not net._grads_ready:
        raise RuntimeError("optimizer_step called before backward")
    state.update(net.parameters(), net.gradients())
    net.zero_grad()
    return net, state
