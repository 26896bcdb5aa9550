"""Patch and Fourier-spectrum critics.

Both share one body: a stack of 4x4 stride-2 convolutions with leaky relu, then a
3x3 head producing a raw (unsquashed) score map.  The Fourier critic sees the image
concatenated with its min-max normalised log-magnitude spectrum and its phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops, spectral
from .errors import DimensionError, ParameterError
from .nn import Conv2d, Module
from .tensor import Tensor, amax, amin, as_tensor, concat, div, mean, sub

SPECTRUM_SOURCES = ("gray", "per_rgb_channel")


@dataclass(frozen=True)
class PatchDiscConfig:
    widths: tuple[int, ...] = (32, 64, 128, 256)

    @property
    def in_channels(self) -> int:
        return 3


@dataclass(frozen=True)
class FourierDiscConfig:
    spectrum_source: str = "gray"
    widths: tuple[int, ...] = (32, 64, 128, 256)

    @property
    def in_channels(self) -> int:
        if self.spectrum_source not in SPECTRUM_SOURCES:
            raise ParameterError(f"unknown spectrum_source {self.spectrum_source!r}")
        planes = 1 if self.spectrum_source == "gray" else 3
        return 3 + 2 * planes


def _minmax(x: Tensor) -> Tensor:
    lo = amin(x, (2, 3))
    span = sub(amax(x, (2, 3)), lo)
    flat = (span.data == 0).astype(x.dtype)
    return div(sub(x, lo), span + flat)


def fourier_features(img: Tensor, source: str = "gray") -> tuple[Tensor, Tensor]:
    """Normalised log-magnitude (in [0, 1]) and phase/pi (in [-1, 1]) planes.

    Spectra are fftshift-ed so the DC term sits at (H // 2, W // 2).
    """
    img = as_tensor(img)
    if img.ndim != 4 or img.shape[1] != 3:
        raise DimensionError(f"fourier_features expects N x 3 x H x W, got {img.shape}")
    if source == "gray":
        planes = ops.grayscale(img)
    elif source == "per_rgb_channel":
        planes = img
    else:
        raise ParameterError(f"unknown spectrum_source {source!r}")
    return _minmax(spectral.log_magnitude(planes)), spectral.phase(planes)


class CriticBody(Module):
    def __init__(self, in_channels: int, widths: tuple[int, ...], rng: np.random.Generator):
        if not widths:
            raise ParameterError("critic needs at least one stride-2 layer")
        chans = (in_channels,) + tuple(widths)
        self.layers = [Conv2d(chans[i], chans[i + 1], 4, rng, stride=2, padding=1)
                       for i in range(len(widths))]
        self.head = Conv2d(widths[-1], 1, 3, rng, stride=1, padding=1)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        for conv in self.layers:
            x = ops.leaky_relu(conv(x))
        return self.head(x), x

    def mac_entries(self, h: int, w: int, prefix: str = "") -> list[tuple[str, int]]:
        entries = []
        for i, conv in enumerate(list(self.layers) + [self.head]):
            h, w = conv.output_size(h, w)
            name = f"{prefix}layers.{i}" if i < len(self.layers) else prefix + "head"
            entries.append((name, conv.k * conv.k * conv.cin * conv.cout * h * w))
        return entries

    def receptive_field(self) -> int:
        rf, jump = 1, 1
        for conv in list(self.layers) + [self.head]:
            rf += (conv.k - 1) * jump
            jump *= conv.stride
        return rf


class PatchDiscriminator(Module):
    def __init__(self, cfg: PatchDiscConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.body = CriticBody(cfg.in_channels, cfg.widths, rng)

    def forward(self, img: Tensor) -> Tensor:
        return self.body(img)[0]

    def scores_and_features(self, img: Tensor) -> tuple[Tensor, Tensor]:
        """Score map plus the penultimate activations average-pooled to N x C vectors."""
        scores, feats = self.body(img)
        return scores, mean(feats, axis=(2, 3))

    def mac_entries(self, h: int, w: int) -> list[tuple[str, int]]:
        return self.body.mac_entries(h, w, "body.")


class FourierDiscriminator(Module):
    def __init__(self, cfg: FourierDiscConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.body = CriticBody(cfg.in_channels, cfg.widths, rng)

    def stacked_input(self, img: Tensor) -> Tensor:
        mag, phase = fourier_features(img, self.cfg.spectrum_source)
        return concat([img, mag, phase], axis=1)

    def forward(self, img: Tensor) -> Tensor:
        return self.body(self.stacked_input(img))[0]

    def scores_and_features(self, img: Tensor) -> tuple[Tensor, Tensor]:
        scores, feats = self.body(self.stacked_input(img))
        return scores, mean(feats, axis=(2, 3))

    def mac_entries(self, h: int, w: int) -> list[tuple[str, int]]:
        return self.body.mac_entries(h, w, "body.")
