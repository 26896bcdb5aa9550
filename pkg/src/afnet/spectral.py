"""2-D discrete Fourier transforms and differentiable spectrum planes.

Transforms run in float64 regardless of the input dtype.  The forward transform is
unnormalised; the inverse divides by H*W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, make_result


@dataclass(frozen=True)
class ComplexSpectrum:
    """H x W complex spectrum stored as separate float64 real/imaginary planes."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape or self.real.ndim != 2:
            raise DimensionError("spectrum planes must be matching 2-D arrays")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexSpectrum":
        return cls(np.ascontiguousarray(z.real, dtype=np.float64),
                   np.ascontiguousarray(z.imag, dtype=np.float64))

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @property
    def shape(self) -> tuple[int, int]:
        return self.real.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)


def _plane(image) -> np.ndarray:
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    data = np.asarray(data, dtype=np.float64)
    while data.ndim > 2 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 2:
        raise DimensionError(f"expected a single H x W plane, got shape {data.shape}")
    return data


def fft2d(image) -> ComplexSpectrum:
    return ComplexSpectrum.from_complex(np.fft.fft2(_plane(image)))


def ifft2d(spectrum: ComplexSpectrum) -> np.ndarray:
    return np.fft.ifft2(spectrum.to_complex()).real


def fftshift(spectrum: ComplexSpectrum) -> ComplexSpectrum:
    """Move the DC coefficient to (H // 2, W // 2)."""
    return ComplexSpectrum(np.fft.fftshift(spectrum.real), np.fft.fftshift(spectrum.imag))


def ifftshift(spectrum: ComplexSpectrum) -> ComplexSpectrum:
    return ComplexSpectrum(np.fft.ifftshift(spectrum.real), np.fft.ifftshift(spectrum.imag))


# -- batched, differentiable spectrum planes ---------------------------------

def _self_conjugate_mask(h: int, w: int) -> np.ndarray:
    """Bins whose coefficient is real for any real input (DC and Nyquist lines)."""
    rows = np.zeros(h, dtype=bool)
    cols = np.zeros(w, dtype=bool)
    rows[0] = cols[0] = True
    if h % 2 == 0:
        rows[h // 2] = True
    if w % 2 == 0:
        cols[w // 2] = True
    return rows[:, None] & cols[None, :]


def centered_spectrum(x: np.ndarray) -> np.ndarray:
    """fftshift(fft2(plane)) over the last two axes, in complex128.

    Imaginary parts on self-conjugate bins are pinned to +0 so phase there is
    exactly 0 or pi instead of flipping sign with roundoff.
    """
    f = np.fft.fft2(np.asarray(x, dtype=np.float64), axes=(-2, -1))
    mask = _self_conjugate_mask(*f.shape[-2:])
    f = np.where(mask, f.real + 0j, f)
    return np.fft.fftshift(f, axes=(-2, -1))


def _adjoint_real_input(gspec: np.ndarray, dtype) -> np.ndarray:
    """Pull a gradient w.r.t. (Re F, Im F) of a centred spectrum back onto the real input."""
    g = np.fft.ifftshift(gspec, axes=(-2, -1))
    h, w = g.shape[-2:]
    return (np.fft.ifft2(g, axes=(-2, -1)).real * (h * w)).astype(dtype)


def log_magnitude(x: Tensor) -> Tensor:
    """log(1 + |F|) of the centred spectrum of every plane."""
    f = centered_spectrum(x.data)
    mag = np.abs(f)
    out = np.log1p(mag).astype(x.dtype)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(mag > 0, g / ((1.0 + mag) * mag), 0.0)
        return (_adjoint_real_input(scale * f, x.dtype),)

    return make_result(out, (x,), backward)


def phase(x: Tensor) -> Tensor:
    """atan2(Im F, Re F) / pi of the centred spectrum, in [-1, 1]."""
    f = centered_spectrum(x.data)
    out = (np.arctan2(f.imag, f.real) / np.pi).astype(x.dtype)

    def backward(g):
        power = f.real * f.real + f.imag * f.imag
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(power > 0, g / (np.pi * power), 0.0)
        return (_adjoint_real_input(scale * 1j * f, x.dtype),)

    return make_result(out, (x,), backward)
