"""The architecture/objective ablation ladder, from a single stage to the full model."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

from .config import RunConfig
from .macs import count_macs
from .training import train, evaluate, restore

LADDER_LABELS = (
    "Single Stage",
    "Two Stage w 1x RDB",
    "w 3x RDB",
    "w 5x RDB",
    "w 7x RDB",
    "Two Stage w 7x RDB + cMSFE-A",
    "+ Patch GAN",
    "+ Fourier GAN (RGB)",
    "AFNet (+ Fourier GAN (Gray))",
)


def ladder(base: RunConfig) -> list[tuple[str, RunConfig]]:
    """The nine ladder configurations derived from ``base``.

    Rows before the patch critic train on L1 + MS-SSIM only, since the contrastive
    term reads its features from that critic.
    """
    plain = replace(base, use_cmsfe_a=False, use_patch_gan=False, use_fourier_gan=False,
                    single_stage=False, stage1_aux_l1=False)
    rows = [("Single Stage", replace(plain, single_stage=True, rdb_count=1))]
    for label, count in zip(LADDER_LABELS[1:5], (1, 3, 5, 7)):
        rows.append((label, replace(plain, rdb_count=count)))
    full = replace(plain, rdb_count=7, use_cmsfe_a=True)
    rows.append((LADDER_LABELS[5], full))
    rows.append((LADDER_LABELS[6], replace(full, use_patch_gan=True, scal_source="patch")))
    rows.append((LADDER_LABELS[7], replace(full, use_patch_gan=True, use_fourier_gan=True,
                                           scal_source="patch", spectrum_source="per_rgb_channel")))
    rows.append((LADDER_LABELS[8], replace(full, use_patch_gan=True, use_fourier_gan=True,
                                           scal_source="patch", spectrum_source="gray")))
    return rows


def generator_gmacs(cfg: RunConfig) -> float:
    """Inference GMACs of the generator for a ``gmacs_res`` x ``gmacs_res`` output."""
    side = cfg.gmacs_res // (2 if cfg.input_mode == "raw4" else 1)
    return count_macs(cfg.generator_config(), (side, side)).gmacs


@dataclass
class AblationRow:
    label: str
    psnr: float
    ssim: float
    gmacs: float


def run_ablation(base: RunConfig, train_set, val_set=None) -> list[AblationRow]:
    rows = []
    for label, cfg in ladder(base):
        result = train(cfg, train_set, val_set)
        generator = restore(result.best).generator
        p, s = evaluate(generator, train_set if val_set is None else val_set, cfg)
        rows.append(AblationRow(label, p, s, generator_gmacs(cfg)))
    return rows


def rows_to_csv(rows: list[AblationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("row", "psnr", "ssim", "gmacs"))
    for r in rows:
        writer.writerow((r.label, repr(r.psnr), repr(r.ssim), repr(r.gmacs)))
    return buf.getvalue()
