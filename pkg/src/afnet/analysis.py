"""Evaluation metrics and frequency-domain diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .discriminators import fourier_features
from .errors import DimensionError, ParameterError
from .losses import SSIM_WINDOW, ms_ssim, ssim_maps
from .spectral import centered_spectrum
from .tensor import Tensor, no_grad

PSD_FLOOR = 1e-12


def _array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def _as_batch(x) -> np.ndarray:
    arr = _array(x)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[None]
    return arr


def psnr(x, y, peak: float = 1.0) -> float:
    a, b = _array(x), _array(y)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes {a.shape} and {b.shape} differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def _luma(arr: np.ndarray) -> np.ndarray:
    if arr.shape[1] == 3:
        with no_grad():
            return ops.grayscale(Tensor(arr)).data
    return arr


def ssim(x, y) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5); RGB is converted to luma."""
    a, b = _as_batch(x), _as_batch(y)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ParameterError(f"ssim needs spatial size >= {SSIM_WINDOW}")
    with no_grad():
        full, _ = ssim_maps(Tensor(_luma(a)), Tensor(_luma(b)))
    return float(full.data.mean())


def max_ms_ssim_levels(h: int, w: int, cap: int = 5) -> int:
    levels = 0
    while levels < cap and min(h, w) >= 2 ** levels * SSIM_WINDOW:
        levels += 1
    return levels


def ms_ssim_metric(x, y, levels: int | None = None) -> float:
    a, b = _as_batch(x), _as_batch(y)
    if levels is None:
        levels = max_ms_ssim_levels(*a.shape[-2:])
        if levels == 0:
            raise ParameterError(f"image {a.shape[-2:]} too small for MS-SSIM")
    with no_grad():
        return float(ms_ssim(Tensor(a), Tensor(b), levels).data)


@dataclass(frozen=True)
class PSDCurve:
    freqs: np.ndarray
    log_power: np.ndarray

    def __len__(self) -> int:
        return len(self.log_power)


def _gray_plane(img) -> np.ndarray:
    arr = _as_batch(img)
    if arr.shape[0] != 1:
        raise DimensionError("psd_curve takes a single image")
    arr = _luma(arr)
    if arr.shape[1] != 1:
        raise DimensionError(f"psd_curve needs 1 or 3 channels, got {arr.shape[1]}")
    return arr[0, 0]


def radial_bins(h: int, w: int) -> np.ndarray:
    """Integer (rounded) distance of every bin from the centred DC position."""
    yy, xx = np.indices((h, w))
    return np.rint(np.hypot(yy - h // 2, xx - w // 2)).astype(int)


def psd_curve(img) -> PSDCurve:
    """Radially averaged log10 power spectrum of the luma plane.

    Bin k holds the mean of log10(|F|^2 / (H W) + 1e-12) over centred bins at
    rounded radius k, for k < min(H, W) // 2.
    """
    plane = _gray_plane(img)
    h, w = plane.shape
    power = np.abs(centered_spectrum(plane)) ** 2 / (h * w)
    logp = np.log10(power + PSD_FLOOR)
    nbins = min(h, w) // 2
    radius = radial_bins(h, w).ravel()
    keep = radius < nbins
    sums = np.bincount(radius[keep], weights=logp.ravel()[keep], minlength=nbins)
    counts = np.bincount(radius[keep], minlength=nbins)
    return PSDCurve(np.arange(nbins) / min(h, w), sums / counts)


def fft_diff_heatmap(a, b) -> tuple[np.ndarray, np.ndarray]:
    """|normalised log-magnitude difference| and wrapped phase distance in [0, 1]."""
    arr_a, arr_b = _as_batch(a), _as_batch(b)
    if arr_a.shape[1] == 1:
        arr_a = np.repeat(arr_a, 3, axis=1)
    if arr_b.shape[1] == 1:
        arr_b = np.repeat(arr_b, 3, axis=1)
    ta, tb = Tensor(arr_a), Tensor(arr_b)
    if ta.shape != tb.shape:
        raise DimensionError(f"fft_diff_heatmap: shapes {ta.shape} and {tb.shape} differ")
    with no_grad():
        mag_a, ph_a = fourier_features(ta)
        mag_b, ph_b = fourier_features(tb)
    mag_diff = np.abs(mag_a.data - mag_b.data)[0, 0]
    d = np.abs(ph_a.data - ph_b.data)[0, 0] * np.pi
    d = np.mod(d, 2 * np.pi)
    return mag_diff, np.minimum(d, 2 * np.pi - d) / np.pi


def heatmap_rgb(plane: np.ndarray) -> np.ndarray:
    """3 x H x W image on a linear blue (low) to red (high) ramp; input clipped to [0, 1]."""
    v = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    return np.stack([v, np.zeros_like(v), 1.0 - v])
