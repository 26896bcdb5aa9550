"""``afnet`` command line: train, enhance, analyze, ablate.

Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import analysis, isp
from .ablation import rows_to_csv, run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_keys, load_config
from .discriminators import fourier_features
from .errors import (DataError, DimensionError, FormatError, NumericError, ParameterError)
from .macs import count_macs
from .tensor import Tensor, no_grad
from .training import PairedDataset, restore, split_dirs, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("config overrides")
    for key in config_keys():
        group.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE", default=None)


def _resolve(args) -> RunConfig:
    overrides = {key: getattr(args, f"cfg_{key}") for key in config_keys()
                 if getattr(args, f"cfg_{key}") is not None}
    return load_config(args.config, overrides)


@contextmanager
def staged_output(out: Path):
    """Yield a scratch directory that replaces ``out`` only if the block succeeds."""
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ParameterError(f"output {out} already exists and is not an empty directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        out.rmdir()
    tmp.rename(out)


# -- train / ablate ----------------------------------------------------------

def _datasets(cfg: RunConfig, root: str):
    train_dir, val_dir = split_dirs(root)
    train_set = PairedDataset(train_dir, cfg.input_mode, cfg.raw_gain)
    val_set = train_set if val_dir == train_dir else PairedDataset(val_dir, cfg.input_mode, cfg.raw_gain)
    return train_set, val_set


def cmd_train(args) -> int:
    cfg = _resolve(args)
    train_set, val_set = _datasets(cfg, args.data)
    with staged_output(args.out) as tmp:
        (tmp / "resolved.cfg").write_text(cfg.to_text(), encoding="utf-8")
        with open(tmp / "log.csv", "w", encoding="utf-8", newline="") as log:
            result = train(cfg, train_set, val_set, log=log)
        save_checkpoint(result.best, tmp / "best.ckpt")
        save_checkpoint(result.last, tmp / "last.ckpt")
    print(f"best val_psnr {result.best.best_val_psnr!r} at epoch {result.best.epoch}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    train_set, val_set = _datasets(cfg, args.data)
    with staged_output(args.out) as tmp:
        (tmp / "resolved.cfg").write_text(cfg.to_text(), encoding="utf-8")
        text = rows_to_csv(run_ablation(cfg, train_set, val_set))
        (tmp / "ablation.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# -- enhance -----------------------------------------------------------------

def _inputs(path: Path, mode: str) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.png"))
        if mode == "raw4":
            files = [f for f in files if isp.sidecar_path(f).is_file()]
        if not files:
            raise DataError(f"no inputs in {path}")
        return files
    if not path.is_file():
        raise DataError(f"no such input {path}")
    return [path]


def enhance_array(generator, low: np.ndarray, divisor: int = 32) -> np.ndarray:
    """Run the generator on a 1 x C x h x w array, edge-padding to ``divisor``."""
    h, w = low.shape[-2:]
    ph, pw = -h % divisor, -w % divisor
    padded = np.pad(low, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    with no_grad():
        _, out = generator(Tensor(padded))
    scale = out.shape[-1] // padded.shape[-1]
    return out.data[:, :, :h * scale, :w * scale]


def cmd_enhance(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    models = restore(ckpt)
    mode = models.cfg.input_mode
    if args.mode is not None and args.mode != mode:
        raise ParameterError(f"checkpoint was trained for {mode}, not {args.mode}")
    files = _inputs(Path(args.input), mode)
    with staged_output(args.out) as tmp:
        for f in files:
            if mode == "raw4":
                low = isp.pack_raw(isp.load_raw(f), models.cfg.raw_gain).data
            else:
                low = isp.load_image(f).data
                if low.shape[1] == 1:
                    low = np.repeat(low, 3, axis=1)
                if low.shape[1] != 3:
                    raise DimensionError(f"{f}: expected an RGB image")
            isp.save_image(enhance_array(models.generator, low), tmp / f"{f.stem}.png")
    print(f"enhanced {len(files)} image(s) into {args.out}")
    return EXIT_OK


# -- analyze -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_rgb(path: Path) -> np.ndarray:
    img = isp.load_image(path).data
    return np.repeat(img, 3, axis=1) if img.shape[1] == 1 else img[:, :3]


def cmd_metrics(args) -> int:
    pred, gt = Path(args.pred), Path(args.gt)
    names_p = sorted(p.name for p in pred.glob("*.png"))
    names_g = sorted(p.name for p in gt.glob("*.png"))
    if not names_p or names_p != names_g:
        raise DataError(f"unmatched image sets: {sorted(set(names_p) ^ set(names_g))[:5]}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("image", "psnr", "ssim", "ms_ssim"))
    table = []
    for name in names_p:
        a, b = _load_rgb(pred / name), _load_rgb(gt / name)
        if a.shape != b.shape:
            raise DataError(f"{name}: shapes {a.shape} and {b.shape} differ")
        row = (analysis.psnr(a, b), analysis.ssim(a, b), analysis.ms_ssim_metric(a, b))
        table.append(row)
        writer.writerow((name, *map(_fmt, row)))
    means = np.mean(np.asarray(table, dtype=np.float64), axis=0)
    writer.writerow(("mean", *map(_fmt, means)))
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_psd(args) -> int:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("image", "bin", "freq", "log_power"))
    for name in args.images:
        curve = analysis.psd_curve(isp.load_image(name).data)
        for k, (f, p) in enumerate(zip(curve.freqs, curve.log_power)):
            writer.writerow((Path(name).name, k, repr(float(f)), repr(float(p))))
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_fft(args) -> int:
    a = _load_rgb(Path(args.image))
    with staged_output(args.out) as tmp:
        with no_grad():
            mag, ph = fourier_features(Tensor(a))
        stem = Path(args.image).stem
        isp.save_image(mag.data[0, 0], tmp / f"{stem}_magnitude.png")
        isp.save_image((ph.data[0, 0] + 1.0) / 2.0, tmp / f"{stem}_phase.png")
        if args.reference is not None:
            b = _load_rgb(Path(args.reference))
            mag_diff, phase_diff = analysis.fft_diff_heatmap(a, b)
            isp.save_image(analysis.heatmap_rgb(mag_diff), tmp / "magnitude_diff.png")
            isp.save_image(analysis.heatmap_rgb(phase_diff), tmp / "phase_diff.png")
    return EXIT_OK


def cmd_gmacs(args) -> int:
    cfg = load_config(args.config, {"gmacs_res": args.res} if args.res is not None else None)
    side = cfg.gmacs_res // (2 if cfg.input_mode == "raw4" else 1)
    report = count_macs(cfg.generator_config(), (side, side))
    _emit(report.to_text(), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afnet", description="Two-stage low-light enhancement with spectral critics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train from paired low/high folders")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train and score the ablation ladder")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("enhance", help="enhance images with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="a PNG file or a folder of PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("srgb3", "raw4"), default=None)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("analyze", help="metrics and frequency diagnostics")
    asub = p.add_subparsers(dest="analysis", required=True, parser_class=_Parser)
    q = asub.add_parser("metrics", help="PSNR/SSIM/MS-SSIM over matched folders")
    q.add_argument("--pred", required=True)
    q.add_argument("--gt", required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_metrics)
    q = asub.add_parser("psd", help="radially averaged power spectra as CSV")
    q.add_argument("images", nargs="+")
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_psd)
    q = asub.add_parser("fft", help="magnitude/phase planes and difference heatmaps")
    q.add_argument("image")
    q.add_argument("--reference", default=None)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_fft)
    q = asub.add_parser("gmacs", help="per-layer generator MAC report")
    q.add_argument("--config", default=None)
    q.add_argument("--res", default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_gmacs)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FormatError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
