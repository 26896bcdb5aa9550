"""Two-stage enhancement network.

Stage 1 balances illumination with a three-scale (1/2, 1/8, 1/32) encoder-decoder
built from channel-split multi-scale blocks with channel attention.  Stage 2 restores
detail at full resolution with residual dense blocks over the concatenation of the
original input and the stage-1 output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ops
from .errors import DimensionError, ParameterError
from .nn import Conv2d, Module
from .tensor import Tensor, add, clamp, concat, mul, split

INPUT_CHANNELS = {"srgb3": 3, "raw4": 4}
STAGE1_DIVISOR = 32


@dataclass(frozen=True)
class CMSFEAConfig:
    channels: int = 16
    split: int = 4
    kernel_sizes: tuple[int, ...] = (1, 3, 5, 7)
    reduction: int = 2

    @property
    def branch_channels(self) -> int:
        return self.channels // self.split

    @property
    def hidden(self) -> int:
        return self.branch_channels // self.reduction

    def validate(self) -> None:
        if self.split < 1 or self.channels % self.split:
            raise ParameterError(f"channels {self.channels} not divisible by split {self.split}")
        if len(self.kernel_sizes) != self.split:
            raise ParameterError(f"need {self.split} kernel sizes, got {self.kernel_sizes}")
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ParameterError(f"kernel sizes must be odd, got {self.kernel_sizes}")
        if self.reduction < 1 or self.hidden < 1:
            raise ParameterError(
                f"attention reduction {self.reduction} leaves no hidden units for "
                f"{self.branch_channels}-channel branches")


@dataclass(frozen=True)
class Stage1Config:
    base_channels: int = 16
    blocks_per_scale: int = 1
    use_cmsfe_a: bool = True
    scales: tuple[int, ...] = (2, 8, 32)

    def widths(self) -> tuple[int, int, int]:
        b = self.base_channels
        return b, 2 * b, 4 * b


@dataclass(frozen=True)
class RDBConfig:
    num_blocks: int = 7
    layers_per_block: int = 4
    growth: int = 16
    block_channels: int = 32

    def validate(self) -> None:
        if min(self.num_blocks, self.layers_per_block, self.growth, self.block_channels) < 1:
            raise ParameterError(f"RDB sizes must be positive: {self}")


@dataclass(frozen=True)
class GeneratorConfig:
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: RDBConfig = field(default_factory=RDBConfig)
    input_mode: str = "srgb3"
    cmsfe: CMSFEAConfig = field(default_factory=CMSFEAConfig)
    single_stage: bool = False

    @property
    def in_channels(self) -> int:
        try:
            return INPUT_CHANNELS[self.input_mode]
        except KeyError:
            raise ParameterError(f"unknown input_mode {self.input_mode!r}") from None

    def validate(self) -> None:
        self.in_channels
        if self.stage1.use_cmsfe_a:
            for width in self.stage1.widths():
                replace(self.cmsfe, channels=width).validate()
        self.stage2.validate()


def _conv_macs(conv: Conv2d, h: int, w: int, name: str) -> tuple[list[tuple[str, int]], int, int]:
    ho, wo = conv.output_size(h, w)
    return [(name, conv.k * conv.k * (conv.cin // conv.groups) * conv.cout * ho * wo)], ho, wo


class ChannelAttention(Module):
    """Squeeze-excitation gate: pool, 1x1 down, relu, 1x1 up, sigmoid, rescale."""

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator):
        self.squeeze = Conv2d(channels, hidden, 1, rng)
        self.excite = Conv2d(hidden, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        s = ops.global_avg_pool(x)
        s = ops.sigmoid(self.excite(ops.relu(self.squeeze(s))))
        return mul(x, s)

    def mac_entries(self, prefix: str) -> list[tuple[str, int]]:
        return [(prefix + "squeeze", self.squeeze.cin * self.squeeze.cout),
                (prefix + "excite", self.excite.cin * self.excite.cout)]


class CMSFEA(Module):
    """Channel split -> per-part conv of its own kernel size -> attention gate ->
    concat -> 1x1 fuse -> residual add."""

    def __init__(self, cfg: CMSFEAConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        c = cfg.branch_channels
        self.branches = [Conv2d(c, c, k, rng) for k in cfg.kernel_sizes]
        self.gates = [ChannelAttention(c, cfg.hidden, rng) for _ in cfg.kernel_sizes]
        self.fuse = Conv2d(cfg.channels, cfg.channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cfg.channels:
            raise DimensionError(f"cMSFE-A expects {self.cfg.channels} channels, got {x.shape[1]}")
        parts = channel_split(x, self.cfg.split)
        outs = [gate(conv(p)) for p, conv, gate in zip(parts, self.branches, self.gates)]
        merged = concat(outs, axis=1) if len(outs) > 1 else outs[0]
        return add(x, self.fuse(merged))

    def mac_entries(self, h: int, w: int, prefix: str) -> list[tuple[str, int]]:
        entries = []
        for i, (conv, gate) in enumerate(zip(self.branches, self.gates)):
            entries += _conv_macs(conv, h, w, f"{prefix}branches.{i}")[0]
            entries += gate.mac_entries(f"{prefix}gates.{i}.")
        entries += _conv_macs(self.fuse, h, w, prefix + "fuse")[0]
        return entries


class Stage1(Module):
    def __init__(self, cfg: Stage1Config, cmsfe: CMSFEAConfig, in_channels: int,
                 out_channels: int, rng: np.random.Generator):
        self.cfg = cfg
        b2, b8, b32 = cfg.widths()
        self.stem = Conv2d(in_channels, b2, 3, rng, stride=2)
        self.enc2 = self._blocks(b2, cmsfe, rng)
        self.down8 = [Conv2d(b2, b8, 3, rng, stride=2), Conv2d(b8, b8, 3, rng, stride=2)]
        self.enc8 = self._blocks(b8, cmsfe, rng)
        self.down32 = [Conv2d(b8, b32, 3, rng, stride=2), Conv2d(b32, b32, 3, rng, stride=2)]
        self.enc32 = self._blocks(b32, cmsfe, rng)
        self.fuse8 = Conv2d(b32 + b8, b8, 3, rng)
        self.dec8 = self._blocks(b8, cmsfe, rng)
        self.fuse2 = Conv2d(b8 + b2, b2, 3, rng)
        self.dec2 = self._blocks(b2, cmsfe, rng)
        self.head = Conv2d(b2, out_channels, 3, rng)

    def _blocks(self, width: int, cmsfe: CMSFEAConfig, rng) -> list[CMSFEA]:
        if not self.cfg.use_cmsfe_a:
            return []
        return [CMSFEA(replace(cmsfe, channels=width), rng) for _ in range(self.cfg.blocks_per_scale)]

    @staticmethod
    def _run(blocks, x):
        for block in blocks:
            x = block(x)
        return x

    def forward(self, x: Tensor, trace: list | None = None) -> Tensor:
        h, w = x.shape[2:]
        if h % STAGE1_DIVISOR or w % STAGE1_DIVISOR:
            raise DimensionError(f"stage 1 needs H, W divisible by {STAGE1_DIVISOR}, got {h}x{w}")
        note = trace.append if trace is not None else (lambda item: None)
        e2 = self._run(self.enc2, ops.relu(self.stem(x)))
        note(("enc 1/2", e2.shape))
        e8 = e2
        for conv in self.down8:
            e8 = ops.relu(conv(e8))
        e8 = self._run(self.enc8, e8)
        note(("enc 1/8", e8.shape))
        e32 = e8
        for conv in self.down32:
            e32 = ops.relu(conv(e32))
        e32 = self._run(self.enc32, e32)
        note(("enc 1/32", e32.shape))
        d8 = concat([ops.bicubic_resample(e32, 4), e8], axis=1)
        d8 = self._run(self.dec8, ops.relu(self.fuse8(d8)))
        note(("dec 1/8", d8.shape))
        d2 = concat([ops.bicubic_resample(d8, 4), e2], axis=1)
        d2 = self._run(self.dec2, ops.relu(self.fuse2(d2)))
        note(("dec 1/2", d2.shape))
        out = ops.sigmoid(self.head(ops.bicubic_resample(d2, 2)))
        note(("out", out.shape))
        return out

    def mac_entries(self, h: int, w: int, prefix: str = "") -> list[tuple[str, int]]:
        entries, h2, w2 = _conv_macs(self.stem, h, w, prefix + "stem")

        def blocks(group, name, bh, bw):
            out = []
            for i, block in enumerate(group):
                out += block.mac_entries(bh, bw, f"{prefix}{name}.{i}.")
            return out

        entries += blocks(self.enc2, "enc2", h2, w2)
        hh, ww = h2, w2
        for i, conv in enumerate(self.down8):
            e, hh, ww = _conv_macs(conv, hh, ww, f"{prefix}down8.{i}")
            entries += e
        h8, w8 = hh, ww
        entries += blocks(self.enc8, "enc8", h8, w8)
        for i, conv in enumerate(self.down32):
            e, hh, ww = _conv_macs(conv, hh, ww, f"{prefix}down32.{i}")
            entries += e
        entries += blocks(self.enc32, "enc32", hh, ww)
        entries += _conv_macs(self.fuse8, h8, w8, prefix + "fuse8")[0]
        entries += blocks(self.dec8, "dec8", h8, w8)
        entries += _conv_macs(self.fuse2, h2, w2, prefix + "fuse2")[0]
        entries += blocks(self.dec2, "dec2", h2, w2)
        entries += _conv_macs(self.head, 2 * h2, 2 * w2, prefix + "head")[0]
        return entries


class RDB(Module):
    """Residual dense block: L densely connected conv3x3+relu layers, 1x1 local
    fusion, local residual."""

    def __init__(self, cfg: RDBConfig, rng: np.random.Generator):
        c, g = cfg.block_channels, cfg.growth
        self.layers = [Conv2d(c + i * g, g, 3, rng) for i in range(cfg.layers_per_block)]
        self.fuse = Conv2d(c + cfg.layers_per_block * g, c, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        feats = [x]
        for conv in self.layers:
            feats.append(ops.relu(conv(concat(feats, axis=1) if len(feats) > 1 else x)))
        return add(x, self.fuse(concat(feats, axis=1)))

    def mac_entries(self, h: int, w: int, prefix: str) -> list[tuple[str, int]]:
        entries = []
        for i, conv in enumerate(self.layers):
            entries += _conv_macs(conv, h, w, f"{prefix}layers.{i}")[0]
        return entries + _conv_macs(self.fuse, h, w, prefix + "fuse")[0]


class Stage2(Module):
    def __init__(self, cfg: RDBConfig, in_channels: int, rng: np.random.Generator):
        cfg.validate()
        c = cfg.block_channels
        self.stem = Conv2d(in_channels, c, 3, rng)
        self.blocks = [RDB(cfg, rng) for _ in range(cfg.num_blocks)]
        self.gff = Conv2d(cfg.num_blocks * c, c, 1, rng)
        self.head = Conv2d(c, 3, 3, rng)

    def forward(self, original: Tensor, balanced: Tensor) -> Tensor:
        if original.shape[0] != balanced.shape[0] or original.shape[2:] != balanced.shape[2:]:
            raise DimensionError(f"stage 2 inputs differ: {original.shape} vs {balanced.shape}")
        s = self.stem(concat([original, balanced], axis=1))
        h, outs = s, []
        for block in self.blocks:
            h = block(h)
            outs.append(h)
        g = self.gff(concat(outs, axis=1) if len(outs) > 1 else outs[0])
        return ops.sigmoid(self.head(add(g, s)))

    def mac_entries(self, h: int, w: int, prefix: str = "") -> list[tuple[str, int]]:
        entries = _conv_macs(self.stem, h, w, prefix + "stem")[0]
        for i, block in enumerate(self.blocks):
            entries += block.mac_entries(h, w, f"{prefix}blocks.{i}.")
        entries += _conv_macs(self.gff, h, w, prefix + "gff")[0]
        return entries + _conv_macs(self.head, h, w, prefix + "head")[0]


class Generator(Module):
    """Full enhancement network; ``forward`` returns (balanced, final)."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        cin = cfg.in_channels
        s1_out = 3 if (cfg.single_stage and cfg.input_mode == "raw4") else cin
        self.stage1 = Stage1(cfg.stage1, cfg.cmsfe, cin, s1_out, rng)
        self.stage2 = None if cfg.single_stage else Stage2(cfg.stage2, 2 * cin, rng)

    def forward(self, x: Tensor, trace: list | None = None) -> tuple[Tensor, Tensor]:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise DimensionError(
                f"{self.cfg.input_mode} generator expects N x {self.cfg.in_channels} x H x W, "
                f"got {x.shape}")
        balanced = self.stage1(x, trace)
        final = balanced if self.stage2 is None else self.stage2(x, balanced)
        if self.cfg.input_mode == "raw4":
            final = clamp(ops.bicubic_resample(final, 2), 0.0, 1.0)
        return balanced, final

    def mac_entries(self, h: int, w: int) -> list[tuple[str, int]]:
        entries = self.stage1.mac_entries(h, w, "stage1.")
        if self.stage2 is not None:
            entries += self.stage2.mac_entries(h, w, "stage2.")
        return entries


def channel_split(x: Tensor, parts: int) -> list[Tensor]:
    """Contiguous, order-preserving split of the channel axis into ``parts`` slices."""
    if parts < 1 or x.shape[1] % parts:
        raise ParameterError(f"{x.shape[1]} channels cannot be split into {parts} parts")
    return split(x, parts, axis=1) if parts > 1 else [x]
