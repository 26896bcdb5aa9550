"""Differentiable image operations on N x C x H x W tensors."""

from __future__ import annotations

import contextlib
import functools
import math
from fractions import Fraction

import numpy as np

from . import _settings, kernels
from .errors import DimensionError, NumericError, ParameterError
from .tensor import Tensor, as_tensor, make_result, mean

LEAKY_SLOPE = 0.2
BICUBIC_A = -0.5
REC601 = (0.299, 0.587, 0.114)

_mac_log: list | None = None


@contextlib.contextmanager
def record_convolutions():
    """Collect the geometry of every conv2d executed inside the block."""
    global _mac_log
    prev = _mac_log
    _mac_log = []
    try:
        yield _mac_log
    finally:
        _mac_log = prev


def _require_4d(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{what} must be N x C x H x W, got shape {x.shape}")


# -- convolution -------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding.

    ``weight`` has shape (Cout, Cin/groups, K, K).  Output spatial size is
    ``(H + 2*padding - K) // stride + 1``.
    """
    _require_4d(x, "conv2d input")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d weight must be Cout x Cin/g x K x K, got {weight.shape}")
    if stride < 1 or padding < 0 or groups < 1:
        raise ParameterError("conv2d needs stride >= 1, padding >= 0, groups >= 1")
    n, cin, h, w = x.shape
    cout, cin_g, k, _ = weight.shape
    if cin % groups or cout % groups or cin_g * groups != cin:
        raise DimensionError(
            f"conv2d channels: input {cin}, weight {weight.shape}, groups {groups}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d bias must have shape ({cout},), got {bias.shape}")
    if _settings.checked():
        if not np.all(np.isfinite(weight.data)) or (
                bias is not None and not np.all(np.isfinite(bias.data))):
            raise NumericError("non-finite convolution parameters")
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d kernel {k} larger than padded input {hp}x{wp}")
    if _mac_log is not None:
        _mac_log.append({"k": k, "cin_per_group": cin_g, "cout": cout, "ho": ho, "wo": wo})

    wdata = weight.data.astype(x.dtype, copy=False)
    xpad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    pointwise = k == 1 and stride == 1
    if pointwise:
        cols = np.ascontiguousarray(xpad).reshape(n, groups, cin_g, h * w)
    else:
        cols = kernels.im2col(xpad, k, stride, ho, wo).reshape(n, groups, cin_g * k * k, ho * wo)
    wmat = wdata.reshape(groups, cout // groups, cin_g * k * k)
    out = np.matmul(wmat, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data.astype(x.dtype, copy=False).reshape(1, cout, 1, 1)

    def backward(g):
        gr = g.reshape(n, groups, cout // groups, ho * wo)
        gw = gx = gb = None
        if weight.requires_grad:
            gw = np.matmul(gr, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.transpose(0, 2, 1), gr)
            if pointwise:
                gx = gcols.reshape(n, cin, h, w)
            else:
                gpad = kernels.col2im(gcols.reshape(n, cin, k, k, ho, wo), hp, wp, stride)
                gx = gpad[:, :, padding:padding + h, padding:padding + w] if padding else gpad
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward)


# -- separable linear maps (resampling, windowed filters) --------------------

def separable(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply ``rows @ plane @ cols.T`` to every H x W plane of ``x``."""
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    if rows.shape[1] != x.shape[-2] or cols.shape[1] != x.shape[-1]:
        raise DimensionError(f"separable map {rows.shape}/{cols.shape} vs input {x.shape}")
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def backward(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return make_result(out, (x,), backward)


def cubic_weight(t: float, a: float = BICUBIC_A) -> float:
    """Keys cubic convolution kernel."""
    t = abs(t)
    if t <= 1.0:
        return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    if t < 2.0:
        return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    return 0.0


@functools.lru_cache(maxsize=256)
def bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Interpolation matrix (n_out x n_in), half-pixel centres, replicated edges."""
    scale = n_out / n_in
    mat = np.zeros((n_out, n_in))
    for o in range(n_out):
        src = (o + 0.5) / scale - 0.5
        base = math.floor(src)
        for m in range(-1, 3):
            idx = base + m
            mat[o, min(max(idx, 0), n_in - 1)] += cubic_weight(src - idx)
    mat.setflags(write=False)
    return mat


def _scaled_size(n: int, scale: Fraction) -> int:
    size = n * scale
    if size.denominator != 1 or size < 1:
        raise ParameterError(f"scale {scale} maps size {n} to non-integral {float(size)}")
    return int(size)


def bicubic_resample(x: Tensor, scale) -> Tensor:
    """Resize by a positive rational factor with the a = -0.5 bicubic kernel."""
    _require_4d(x, "bicubic_resample input")
    scale = Fraction(scale)
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    h, w = x.shape[2:]
    ho, wo = _scaled_size(h, scale), _scaled_size(w, scale)
    return separable(x, bicubic_matrix(h, ho), bicubic_matrix(w, wo))


@functools.lru_cache(maxsize=64)
def avg_pool2_matrix(n: int) -> np.ndarray:
    mat = np.zeros((n // 2, n))
    for o in range(n // 2):
        mat[o, 2 * o:2 * o + 2] = 0.5
    mat.setflags(write=False)
    return mat


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; a trailing odd row/column is dropped."""
    h, w = x.shape[-2:]
    return separable(x, avg_pool2_matrix(h), avg_pool2_matrix(w))


# -- activations -------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return make_result(x.data * factor, (x,), lambda g: (g * factor,))


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x.data))
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out * out),))


_ACTIVATIONS = {"relu": relu, "leaky_relu": leaky_relu, "sigmoid": sigmoid, "tanh": tanh}


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ParameterError(f"unknown activation {kind!r}") from None
    return fn(x)


# -- pooling and colour ------------------------------------------------------

def global_avg_pool(x: Tensor) -> Tensor:
    _require_4d(x, "global_avg_pool input")
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise DimensionError("global_avg_pool needs H, W >= 1")
    return mean(x, axis=(2, 3), keepdims=True)


def grayscale(rgb: Tensor) -> Tensor:
    """Rec. 601 luma of an N x 3 x H x W tensor."""
    rgb = as_tensor(rgb)
    _require_4d(rgb, "grayscale input")
    if rgb.shape[1] != 3:
        raise DimensionError(f"grayscale expects 3 channels, got {rgb.shape[1]}")
    weights = np.asarray(REC601, dtype=rgb.dtype).reshape(1, 3, 1, 1)
    out = (rgb.data * weights).sum(axis=1, keepdims=True)
    return make_result(out, (rgb,), lambda g: (g * weights,))
