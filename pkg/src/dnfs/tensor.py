"""Rank-4 tensor primitives with hand-derived backward passes.

Tensors are plain ``numpy.ndarray`` objects shaped ``(N, C, H, W)``. Every
operation validates shapes explicitly and never broadcasts. float32 is the
training dtype; float64 inputs are accepted unchanged (used by gradient
checks).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when a tensor does not have the shape an operation requires."""


def check_tensor(x, name="input"):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 (N, C, H, W), got shape {x.shape}")
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


@dataclass
class ConvParams:
    """Kernel ``(C_out, C_in, K, K)`` and bias ``(C_out,)`` plus geometry.

    The same container parameterizes forward and transposed convolution;
    ``C_in`` always indexes the input side of the op being applied.
    ``output_padding`` only affects transposed convolution.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    output_padding: int = 0

    def __post_init__(self):
        k = self.kernel
        if k.ndim != 4 or k.shape[2] != k.shape[3]:
            raise ShapeError(f"kernel must be (C_out, C_in, K, K), got {k.shape}")
        if self.bias.shape != (k.shape[0],):
            raise ShapeError(f"bias must have shape ({k.shape[0]},), got {self.bias.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        if not 0 <= self.output_padding < self.stride:
            raise ValueError("output_padding must satisfy 0 <= output_padding < stride")

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    @property
    def size(self):
        return self.kernel.shape[2]


def conv_output_size(n, k, stride, padding):
    span = n + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"spatial size {n} with kernel {k}, stride {stride}, padding {padding} "
            f"does not give an integral output size"
        )
    return span // stride + 1


def conv_transpose_output_size(n, k, stride, padding, output_padding=0):
    out = (n - 1) * stride - 2 * padding + k + output_padding
    if out <= 0:
        raise ShapeError(f"transposed convolution of size {n} gives non-positive output {out}")
    return out


def _windows(xp, k, stride, ho, wo):
    # (N, C, Ho, Wo, K, K) strided view; no copy
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _im2col(xp, k, stride, ho, wo):
    n, c = xp.shape[:2]
    win = _windows(xp, k, stride, ho, wo)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def _col2im(cols, shape, k, stride, ho, wo):
    # scatter-add adjoint of _im2col into a zero buffer of ``shape``
    n, c = shape[:2]
    out = np.zeros(shape, dtype=cols.dtype)
    cols = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return out


def _check_channels(x, params, what):
    if x.shape[1] != params.in_channels:
        raise ShapeError(
            f"{what}: input has {x.shape[1]} channels, kernel expects {params.in_channels}"
        )


def conv2d_forward(x, params):
    """Cross-correlation of ``x`` with ``params.kernel`` plus bias."""
    x = check_tensor(x)
    _check_channels(x, params, "conv2d")
    n, _, h, w = x.shape
    k, s, p = params.size, params.stride, params.padding
    ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = _im2col(xp, k, s, ho, wo)
    out = cols @ params.kernel.reshape(params.out_channels, -1).T.astype(x.dtype, copy=False)
    out += params.bias.astype(x.dtype, copy=False)
    return out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2).copy()


def conv2d_backward(x, params, grad_out):
    """Gradients of ``sum(grad_out * conv2d_forward(x, params))``.

    Returns ``(grad_input, grad_kernel, grad_bias)``.
    """
    x = check_tensor(x)
    _check_channels(x, params, "conv2d")
    n, c, h, w = x.shape
    k, s, p = params.size, params.stride, params.padding
    ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
    expected = (n, params.out_channels, ho, wo)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out must have shape {expected}, got {grad_out.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = _im2col(xp, k, s, ho, wo)
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, params.out_channels)
    grad_kernel = (g.T @ cols).reshape(params.kernel.shape)
    grad_bias = g.sum(axis=0)
    wmat = params.kernel.reshape(params.out_channels, -1).astype(x.dtype, copy=False)
    grad_xp = _col2im(g @ wmat, xp.shape, k, s, ho, wo)
    grad_input = grad_xp[:, :, p : p + h, p : p + w] if p else grad_xp
    return np.ascontiguousarray(grad_input), grad_kernel, grad_bias


def _transpose_geometry(h, params):
    k, s, p, op = params.size, params.stride, params.padding, params.output_padding
    out = conv_transpose_output_size(h, k, s, p, op)
    # full scatter buffer must hold both the uncropped span and the cropped window
    full = max((h - 1) * s + k, p + out)
    return out, full


def conv_transpose2d_forward(x, params):
    """Transposed convolution: scatter-add adjoint of strided convolution.

    Output size per axis is ``(H - 1) * stride - 2 * padding + K + output_padding``.
    """
    x = check_tensor(x)
    _check_channels(x, params, "conv_transpose2d")
    n, c, h, w = x.shape
    k, s, p = params.size, params.stride, params.padding
    ho, fh = _transpose_geometry(h, params)
    wo, fw = _transpose_geometry(w, params)
    cout = params.out_channels
    # (N*H*W, C_in) @ (C_in, C_out*K*K)
    wmat = params.kernel.transpose(1, 0, 2, 3).reshape(c, -1).astype(x.dtype, copy=False)
    cols = x.transpose(0, 2, 3, 1).reshape(-1, c) @ wmat
    full = np.zeros((n, cout, fh, fw), dtype=x.dtype)
    cols = cols.reshape(n, h, w, cout, k, k).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            full[:, :, i : i + s * h : s, j : j + s * w : s] += cols[:, :, i, j]
    out = full[:, :, p : p + ho, p : p + wo] + params.bias.astype(x.dtype).reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out)


def conv_transpose2d_backward(x, params, grad_out):
    """Gradients of ``sum(grad_out * conv_transpose2d_forward(x, params))``."""
    x = check_tensor(x)
    _check_channels(x, params, "conv_transpose2d")
    n, c, h, w = x.shape
    k, s, p = params.size, params.stride, params.padding
    ho, fh = _transpose_geometry(h, params)
    wo, fw = _transpose_geometry(w, params)
    cout = params.out_channels
    expected = (n, cout, ho, wo)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out must have shape {expected}, got {grad_out.shape}")
    full = np.zeros((n, cout, fh, fw), dtype=grad_out.dtype)
    full[:, :, p : p + ho, p : p + wo] = grad_out
    # every input pixel reads a KxK window of the scatter buffer
    cols = _im2col(full, k, s, h, w)  # (N*H*W, C_out*K*K)
    wmat = params.kernel.reshape(cout, c, k * k).transpose(0, 2, 1).reshape(cout * k * k, c)
    grad_input = (cols @ wmat.astype(cols.dtype, copy=False)).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    xf = x.transpose(0, 2, 3, 1).reshape(-1, c)
    grad_kernel = (xf.T @ cols).reshape(c, cout, k, k).transpose(1, 0, 2, 3)
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(grad_input), np.ascontiguousarray(grad_kernel), grad_bias


def maxpool2(x):
    """2x2 max pooling with stride 2.

    Returns ``(output, argmax)`` where ``argmax`` holds the winning offset
    (0..3, row-major within the window). Ties go to the first occurrence.
    """
    x = check_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2_backward(argmax, grad_out):
    n, c, h2, w2 = grad_out.shape
    if argmax.shape != grad_out.shape:
        raise ShapeError(f"argmax shape {argmax.shape} does not match grad_out {grad_out.shape}")
    win = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(win, argmax[..., None], grad_out[..., None], axis=-1)
    return win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, grad_out):
    """Backward pass given the sigmoid *output* ``y``."""
    return grad_out * y * (1 - y)


def concat_channels(a, b):
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("concat_channels needs rank-4 tensors")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape}: N, H, W must agree")
    return np.concatenate([a, b], axis=1)


def split_channels(grad_out, channels_a):
    """Backward of :func:`concat_channels`: split along channels at ``channels_a``."""
    return grad_out[:, :channels_a].copy(), grad_out[:, channels_a:].copy()
