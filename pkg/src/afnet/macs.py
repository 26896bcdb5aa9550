"""Analytic multiply-accumulate accounting for the generator and critics.

Convolutions cost K*K*(Cin/groups)*Cout*Hout*Wout MACs; the 1x1 layers inside
channel attention act on pooled 1x1 maps and so cost Cin*Cout.  Activations,
pooling, resampling and FFTs count as zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discriminators import FourierDiscConfig, FourierDiscriminator, PatchDiscConfig, PatchDiscriminator
from .errors import ParameterError
from .generator import Generator, GeneratorConfig


def conv_macs(k: int, cin: int, cout: int, hout: int, wout: int, groups: int = 1) -> int:
    return k * k * (cin // groups) * cout * hout * wout


@dataclass
class MacReport:
    resolution: tuple[int, int]
    entries: list[tuple[str, int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(m for _, m in self.entries)

    @property
    def gmacs(self) -> float:
        return self.total / 1e9

    def to_text(self) -> str:
        width = max((len(name) for name, _ in self.entries), default=5)
        lines = [f"# MAC report at {self.resolution[0]}x{self.resolution[1]}"]
        lines += [f"{name:<{width}}  {macs:>14d}" for name, macs in self.entries]
        lines.append(f"{'total':<{width}}  {self.total:>14d}")
        lines.append(f"gmacs = {self.gmacs:.6f}")
        return "\n".join(lines) + "\n"


def build_model(cfg):
    rng = np.random.default_rng(0)
    if isinstance(cfg, GeneratorConfig):
        return Generator(cfg, rng)
    if isinstance(cfg, PatchDiscConfig):
        return PatchDiscriminator(cfg, rng)
    if isinstance(cfg, FourierDiscConfig):
        return FourierDiscriminator(cfg, rng)
    raise ParameterError(f"no MAC model for {type(cfg).__name__}")


def count_macs(cfg, input_shape) -> MacReport:
    """MAC report for ``cfg`` at ``input_shape`` ((C,) H, W); depends only on shapes."""
    h, w = tuple(input_shape)[-2:]
    model = build_model(cfg)
    return MacReport((h, w), model.mac_entries(h, w))
