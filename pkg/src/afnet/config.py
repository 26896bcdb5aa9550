"""Flat run configuration read from ``key = value`` text files.

Every field of :class:`RunConfig` is a config key and a CLI flag of the same name.
"""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .discriminators import FourierDiscConfig, PatchDiscConfig
from .errors import ParameterError
from .generator import CMSFEAConfig, GeneratorConfig, RDBConfig, Stage1Config
from .isp import parse_key_values
from .losses import LossWeights


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # schedule
    epochs: int = 1000
    lr0: float = 1e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 200
    batch_size: int = 4
    crop: int = 256
    # generator
    input_mode: str = "srgb3"
    base_channels: int = 16
    blocks_per_scale: int = 1
    use_cmsfe_a: bool = True
    cmsfe_split: int = 4
    cmsfe_kernels: tuple[int, ...] = (1, 3, 5, 7)
    attention_reduction: int = 2
    single_stage: bool = False
    rdb_count: int = 7
    rdb_layers: int = 4
    rdb_growth: int = 16
    rdb_channels: int = 32
    stage1_aux_l1: bool = False
    # critics
    use_patch_gan: bool = True
    use_fourier_gan: bool = True
    spectrum_source: str = "gray"
    disc_widths: tuple[int, ...] = (32, 64, 128, 256)
    # objective
    w_l1: float = 1.0
    w_ms_ssim: float = 1.0
    w_scal: float = 0.01
    w_p_adv: float = 0.5
    w_f_adv: float = 0.5
    scal_tau: float = 0.5
    scal_source: str = "patch"
    ms_ssim_levels: int = 3
    # augmentation
    augment: bool = True
    gamma_min: float = 0.6
    gamma_max: float = 1.4
    gain_min: float = 0.7
    gain_max: float = 1.3
    noise_max: float = 0.02
    # RAW ingestion
    raw_gain: float = 1.0
    # reporting
    gmacs_res: int = 256

    def __post_init__(self):
        if self.input_mode not in ("srgb3", "raw4"):
            raise ParameterError(f"input_mode must be srgb3 or raw4, got {self.input_mode!r}")
        divisor = self.crop_divisor
        if self.crop < divisor or self.crop % divisor:
            raise ParameterError(f"crop {self.crop} must be a positive multiple of {divisor}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr_decay_every < 1:
            raise ParameterError("epochs >= 0, batch_size >= 1 and lr_decay_every >= 1 required")
        if self.rdb_count < 1:
            raise ParameterError("rdb_count must be >= 1")
        if self.scal_source not in ("patch", "fourier"):
            raise ParameterError(f"scal_source must be patch or fourier, got {self.scal_source!r}")
        if self.spectrum_source not in ("gray", "per_rgb_channel"):
            raise ParameterError(f"unknown spectrum_source {self.spectrum_source!r}")
        if self.stage1_aux_l1 and self.input_mode == "raw4":
            raise ParameterError("stage1_aux_l1 is only defined for srgb3 input")
        self.loss_weights()

    @property
    def crop_divisor(self) -> int:
        return 64 if self.input_mode == "raw4" else 32

    # -- derived component configs ----------------------------------------
    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            stage1=Stage1Config(self.base_channels, self.blocks_per_scale, self.use_cmsfe_a),
            stage2=RDBConfig(self.rdb_count, self.rdb_layers, self.rdb_growth, self.rdb_channels),
            input_mode=self.input_mode,
            cmsfe=CMSFEAConfig(self.base_channels, self.cmsfe_split, tuple(self.cmsfe_kernels),
                               self.attention_reduction),
            single_stage=self.single_stage,
        )

    def patch_disc_config(self) -> PatchDiscConfig | None:
        return PatchDiscConfig(tuple(self.disc_widths)) if self.use_patch_gan else None

    def fourier_disc_config(self) -> FourierDiscConfig | None:
        if not self.use_fourier_gan:
            return None
        return FourierDiscConfig(self.spectrum_source, tuple(self.disc_widths))

    def loss_weights(self) -> LossWeights:
        """Weights with terms of disabled critics switched off."""
        scal_critic = self.use_patch_gan if self.scal_source == "patch" else self.use_fourier_gan
        return LossWeights(
            l1=self.w_l1,
            ms_ssim=self.w_ms_ssim,
            scal=self.w_scal if scal_critic else 0.0,
            p_adv=self.w_p_adv if self.use_patch_gan else 0.0,
            f_adv=self.w_f_adv if self.use_fourier_gan else 0.0,
        )

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {format_value(value)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        return replace(self, **coerce_values(overrides))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in data:
                value = data[f.name]
                kwargs[f.name] = tuple(value) if isinstance(value, list) else value
        unknown = set(data) - set(kwargs)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


_HINTS = typing.get_type_hints(RunConfig)


def config_keys() -> list[str]:
    return [f.name for f in fields(RunConfig)]


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse(name: str, text: str):
    hint = _HINTS[name]
    text = text.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ParameterError(f"config key {name}: {exc}") from None


def coerce_values(raw: dict[str, str]) -> dict:
    unknown = set(raw) - set(_HINTS)
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    return {key: _parse(key, value) if isinstance(value, str) else value for key, value in raw.items()}


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None,
                env: typing.Mapping[str, str] | None = None) -> RunConfig:
    """Defaults <- config file <- ``AFNET_SEED`` <- explicit overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(parse_key_values(Path(path).read_text(encoding="utf-8")))
    env = os.environ if env is None else env
    if env.get("AFNET_SEED"):
        raw["seed"] = env["AFNET_SEED"]
    raw.update(overrides or {})
    return RunConfig(**coerce_values(raw))
