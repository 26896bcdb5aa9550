"""Alternating critic/generator optimisation with validation-driven selection."""

from __future__ import annotations

import contextlib
import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, TextIO

import numpy as np

from . import isp, ops
from .analysis import psnr, ssim
from .checkpoint import Checkpoint
from .config import RunConfig
from .discriminators import FourierDiscriminator, PatchDiscriminator
from .errors import DataError, FormatError, NumericError
from .generator import Generator
from .losses import TERMS, l1_loss, lsgan_d_loss, total_generator_loss
from .nn import Module
from .tensor import Tensor, add, clamp, concat, no_grad

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8

LOG_COLUMNS = ("epoch", "step", *TERMS, "total", "d1_loss", "d2_loss", "lr", "val_psnr", "val_ssim")


def lr_at(epoch: int, cfg: RunConfig) -> float:
    """Step-decayed learning rate: lr0 * decay ** (epoch // decay_every)."""
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.lr_decay_every)


# -- optimiser ---------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None],
              state: AdamState, rate: float) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    c1 = 1.0 - BETA1 ** state.t
    c2 = 1.0 - BETA2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        p -= (rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)).astype(p.dtype)


class Adam:
    def __init__(self, module: Module):
        self.module = module
        self.state = AdamState()

    def step(self, rate: float) -> None:
        named = dict(self.module.named_parameters())
        adam_step({k: p.data for k, p in named.items()},
                  {k: p.grad for k, p in named.items()}, self.state, rate)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.state.m:
            out[f"m.{name}"] = self.state.m[name]
            out[f"v.{name}"] = self.state.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], t: int) -> None:
        names = {n for n, _ in self.module.named_parameters()}
        self.state = AdamState(t=t)
        for key, arr in tensors.items():
            kind, _, name = key.partition(".")
            if kind not in ("m", "v") or name not in names:
                raise FormatError(f"unknown optimiser tensor {key!r}")
            getattr(self.state, kind)[name] = np.array(arr, dtype=np.float32)


@contextlib.contextmanager
def frozen(module: Module | None):
    """Stop weight gradients of ``module`` while input gradients still flow."""
    params = module.parameters() if module is not None else []
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


# -- augmentation ------------------------------------------------------------

@dataclass(frozen=True)
class AugmentDraw:
    hflip: bool = False
    vflip: bool = False
    rot90: int = 0
    gamma: float = 1.0
    gain: float = 1.0
    noise_sigma: float = 0.0


def sample_draw(rng: np.random.Generator, cfg: RunConfig, geometric: bool = True) -> AugmentDraw:
    flips = rng.integers(0, 2, size=2)
    rot = int(rng.integers(0, 4))
    gamma = float(rng.uniform(cfg.gamma_min, cfg.gamma_max))
    gain = float(rng.uniform(cfg.gain_min, cfg.gain_max))
    sigma = float(rng.uniform(0.0, cfg.noise_max))
    if not geometric:
        return AugmentDraw(gamma=gamma, gain=gain, noise_sigma=sigma)
    return AugmentDraw(bool(flips[0]), bool(flips[1]), rot, gamma, gain, sigma)


def apply_augment(low: np.ndarray, high: np.ndarray, draw: AugmentDraw,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Geometric transforms on both (C x H x W) images; photometric ones on ``low`` only."""
    def geo(a):
        if draw.hflip:
            a = a[:, :, ::-1]
        if draw.vflip:
            a = a[:, ::-1, :]
        if draw.rot90:
            a = np.rot90(a, draw.rot90, axes=(1, 2))
        return np.ascontiguousarray(a)

    low, high = geo(low), geo(high)
    out = low
    if draw.gamma != 1.0:
        out = np.power(out, draw.gamma)
    if draw.gain != 1.0:
        out = out * draw.gain
    if draw.noise_sigma > 0:
        out = out + rng.normal(0.0, draw.noise_sigma, size=out.shape)
    out = np.clip(out, 0.0, 1.0).astype(low.dtype)
    return out, high


def augment(low, high, rng: np.random.Generator, cfg: RunConfig = RunConfig()):
    draw = sample_draw(rng, cfg)
    return apply_augment(np.asarray(low), np.asarray(high), draw, rng)


# -- data --------------------------------------------------------------------

class PairedDataset:
    """``low/`` and ``high/`` folders of PNGs paired by file name.

    In raw4 mode each ``low/`` entry is a 16-bit mosaic with a ``.txt`` sidecar and
    the ``high/`` image has the mosaic's full resolution.
    """

    def __init__(self, root: str | Path, input_mode: str = "srgb3", raw_gain: float = 1.0):
        self.root = Path(root)
        self.input_mode = input_mode
        self.raw_gain = raw_gain
        low_dir, high_dir = self.root / "low", self.root / "high"
        if not low_dir.is_dir() or not high_dir.is_dir():
            raise DataError(f"{self.root} must contain low/ and high/ folders")
        lows = sorted(p.name for p in low_dir.glob("*.png"))
        highs = sorted(p.name for p in high_dir.glob("*.png"))
        if not lows:
            raise DataError(f"no images in {low_dir}")
        if lows != highs:
            missing = sorted(set(lows) ^ set(highs))
            raise DataError(f"unpaired files under {self.root}: {missing[:5]}")
        self.names = lows
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if i not in self._cache:
            name = self.names[i]
            high = isp.load_image(self.root / "high" / name).data[0]
            if high.shape[0] != 3:
                high = np.repeat(high[:1], 3, axis=0)
            low_path = self.root / "low" / name
            if self.input_mode == "raw4":
                low = isp.pack_raw(isp.load_raw(low_path), self.raw_gain).data[0]
                if (2 * low.shape[1], 2 * low.shape[2]) != high.shape[1:]:
                    raise DataError(f"{name}: mosaic and ground truth sizes disagree")
            else:
                low = isp.load_image(low_path).data[0]
                if low.shape[0] != 3:
                    low = np.repeat(low[:1], 3, axis=0)
                if low.shape != high.shape:
                    raise DataError(f"{name}: low {low.shape} vs high {high.shape}")
            self._cache[i] = (low, high)
        return self._cache[i]


class ArrayDataset:
    """In-memory pairs (C x h x w low, 3 x H x W high)."""

    def __init__(self, pairs):
        self.pairs = [(np.asarray(l, np.float32), np.asarray(h, np.float32)) for l, h in pairs]
        if not self.pairs:
            raise DataError("empty dataset")
        self.names = [f"pair{i:04d}" for i in range(len(self.pairs))]

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


def split_dirs(root: str | Path) -> tuple[Path, Path]:
    """``root/train`` and ``root/val`` when present, else ``root`` for both."""
    root = Path(root)
    if (root / "train").is_dir():
        val = root / "val" if (root / "val").is_dir() else root / "train"
        return root / "train", val
    return root, root


def _scale(cfg: RunConfig) -> int:
    return 2 if cfg.input_mode == "raw4" else 1


def random_crop(low: np.ndarray, high: np.ndarray, crop: int, scale: int,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lc = crop // scale
    h, w = low.shape[1:]
    if h < lc or w < lc:
        raise DataError(f"image {h * scale}x{w * scale} smaller than crop {crop}")
    y = int(rng.integers(0, h - lc + 1))
    x = int(rng.integers(0, w - lc + 1))
    return (low[:, y:y + lc, x:x + lc],
            high[:, y * scale:(y + lc) * scale, x * scale:(x + lc) * scale])


def center_crop(low: np.ndarray, high: np.ndarray, divisor: int, scale: int):
    """Largest centred crop whose ground-truth size is a multiple of ``divisor``."""
    h, w = high.shape[1:]
    ch, cw = h - h % divisor, w - w % divisor
    if ch == 0 or cw == 0:
        raise DataError(f"image {h}x{w} smaller than {divisor}")
    y, x = ((h - ch) // 2) // scale * scale, ((w - cw) // 2) // scale * scale
    return (low[:, y // scale:(y + ch) // scale, x // scale:(x + cw) // scale],
            high[:, y:y + ch, x:x + cw])


def iter_batches(dataset, cfg: RunConfig, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled, cropped, augmented batches; every sample draws from its own
    ``(seed, epoch, index)`` stream so results do not depend on loading order."""
    order = np.random.default_rng([cfg.seed, epoch, 1]).permutation(len(dataset))
    scale = _scale(cfg)
    for start in range(0, len(order), cfg.batch_size):
        lows, highs = [], []
        for idx in order[start:start + cfg.batch_size]:
            rng = np.random.default_rng([cfg.seed, epoch, int(idx), 2])
            low, high = dataset[int(idx)]
            low, high = random_crop(low, high, cfg.crop, scale, rng)
            if cfg.augment:
                draw = sample_draw(rng, cfg, geometric=cfg.input_mode != "raw4")
                low, high = apply_augment(low, high, draw, rng)
            lows.append(low)
            highs.append(high)
        yield np.stack(lows).astype(np.float32), np.stack(highs).astype(np.float32)


# -- models ------------------------------------------------------------------

@dataclass
class Models:
    cfg: RunConfig
    generator: Generator
    patch: PatchDiscriminator | None
    fourier: FourierDiscriminator | None
    opt_g: Adam = None
    opt_patch: Adam | None = None
    opt_fourier: Adam | None = None

    def __post_init__(self):
        self.opt_g = Adam(self.generator)
        self.opt_patch = Adam(self.patch) if self.patch is not None else None
        self.opt_fourier = Adam(self.fourier) if self.fourier is not None else None

    def groups(self):
        yield "G", self.generator, self.opt_g
        if self.patch is not None:
            yield "D1", self.patch, self.opt_patch
        if self.fourier is not None:
            yield "D2", self.fourier, self.opt_fourier

    def scal_critic(self):
        return self.patch if self.cfg.scal_source == "patch" else self.fourier


def build_models(cfg: RunConfig) -> Models:
    """Initialise every network from ``cfg.seed`` in a fixed order (G, D1, D2)."""
    rng = np.random.default_rng(cfg.seed)
    gen = Generator(cfg.generator_config(), rng)
    pcfg, fcfg = cfg.patch_disc_config(), cfg.fourier_disc_config()
    patch = PatchDiscriminator(pcfg, rng) if pcfg is not None else None
    fourier = FourierDiscriminator(fcfg, rng) if fcfg is not None else None
    return Models(cfg, gen, patch, fourier)


def snapshot(models: Models, epoch: int, best_val_psnr: float) -> Checkpoint:
    tensors, steps = {}, {}
    for tag, module, opt in models.groups():
        for name, arr in module.state_dict().items():
            tensors[f"{tag}.{name}"] = arr.copy()
        for name, arr in opt.state_tensors().items():
            tensors[f"opt.{tag}.{name}"] = arr.copy()
        steps[tag] = opt.state.t
    return Checkpoint(config=models.cfg.to_dict(), tensors=tensors, epoch=epoch,
                      best_val_psnr=best_val_psnr, meta={"adam_steps": steps})


def restore(ckpt: Checkpoint) -> Models:
    cfg = RunConfig.from_dict(ckpt.config)
    models = build_models(cfg)
    known = {"G", "D1", "D2", "opt"}
    stray = {k for k in ckpt.tensors if k.split(".", 1)[0] not in known}
    if stray:
        raise FormatError(f"unknown tensor names: {sorted(stray)[:5]}")
    steps = ckpt.meta.get("adam_steps", {})
    seen = set()
    for tag, module, opt in models.groups():
        try:
            module.load_state_dict(ckpt.group(tag))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"checkpoint does not match {tag}: {exc}") from exc
        opt.load_state_tensors(ckpt.group(f"opt.{tag}"), int(steps.get(tag, 0)))
        seen.add(tag)
    extra = {k.split(".")[0] if not k.startswith("opt.") else k.split(".")[1]
             for k in ckpt.tensors} - seen
    if extra:
        raise FormatError(f"checkpoint holds tensors for absent networks: {sorted(extra)}")
    return models


# -- one optimisation step ---------------------------------------------------

def negative_rgb(low: Tensor, cfg: RunConfig) -> Tensor:
    """The degraded input as a ground-truth-sized RGB image (SCAL negative)."""
    if cfg.input_mode != "raw4":
        return low
    d = low.data
    rgb = np.stack([d[:, 0], 0.5 * (d[:, 1] + d[:, 3]), d[:, 2]], axis=1)
    with no_grad():
        return clamp(ops.bicubic_resample(Tensor(rgb), 2), 0.0, 1.0)


def train_step(models: Models, low: np.ndarray, high: np.ndarray, rate: float) -> dict:
    cfg = models.cfg
    weights = cfg.loss_weights()
    x, y = Tensor(low), Tensor(high)
    balanced, fake = models.generator(x)
    row: dict = {}

    fake_detached = fake.detach()
    for key, critic, opt in (("d1_loss", models.patch, models.opt_patch),
                             ("d2_loss", models.fourier, models.opt_fourier)):
        if critic is None:
            continue
        critic.zero_grad()
        loss = lsgan_d_loss(critic(y), critic(fake_detached))
        loss.backward()
        opt.step(rate)
        row[key] = float(loss.data)

    models.generator.zero_grad()
    with frozen(models.patch), frozen(models.fourier):
        disc_outputs, anchors = {}, {}
        if models.patch is not None:
            disc_outputs["p_adv"], anchors["patch"] = models.patch.scores_and_features(fake)
        if models.fourier is not None:
            disc_outputs["f_adv"], anchors["fourier"] = models.fourier.scores_and_features(fake)
        feats = None
        critic = models.scal_critic()
        if critic is not None:
            with no_grad():
                positive = critic.scores_and_features(y)[1]
                negative = critic.scores_and_features(negative_rgb(x, cfg))[1]
            feats = (anchors[cfg.scal_source], positive, negative)
        breakdown = total_generator_loss(fake, y, disc_outputs, feats, weights,
                                         cfg.ms_ssim_levels, cfg.scal_tau)
        total = breakdown.total
        if cfg.stage1_aux_l1:
            total = add(total, l1_loss(balanced, y))
        if not math.isfinite(float(total.data)):
            raise NumericError(f"non-finite generator loss: {breakdown.terms}")
        if total.requires_grad:
            total.backward()
    models.opt_g.step(rate)
    row.update(breakdown.terms)
    row["total"] = float(total.data)
    return row


# -- validation and the training loop ----------------------------------------

def evaluate(generator: Generator, dataset, cfg: RunConfig) -> tuple[float, float]:
    """Mean PSNR / SSIM of the generator over centred, size-compatible crops."""
    scores_p, scores_s = [], []
    scale = _scale(cfg)
    with no_grad():
        for i in range(len(dataset)):
            low, high = center_crop(*dataset[i], cfg.crop_divisor, scale)
            _, out = generator(Tensor(low[None]))
            scores_p.append(psnr(out.data, high[None]))
            scores_s.append(ssim(out.data, high[None]))
    return float(np.mean(scores_p)), float(np.mean(scores_s))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class CsvLog:
    def __init__(self, stream: TextIO | None):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n") if stream is not None else None
        if self.writer is not None:
            self.writer.writerow(LOG_COLUMNS)

    def write(self, row: dict) -> None:
        if self.writer is not None:
            self.writer.writerow([_fmt(row.get(col)) for col in LOG_COLUMNS])
            self.stream.flush()


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    val_history: list[float]
    rows: list[dict]


def train(cfg: RunConfig, train_set, val_set=None, log: TextIO | None = None,
          models: Models | None = None, max_steps: int | None = None) -> TrainResult:
    """Run ``cfg.epochs`` epochs; return the best-validation-PSNR and last checkpoints.

    ``max_steps`` caps the number of generator updates (desk-scale experiments).
    """
    if len(train_set) == 0:
        raise DataError("empty training split")
    val_set = train_set if val_set is None else val_set
    if len(val_set) == 0:
        raise DataError("empty validation split")
    models = build_models(cfg) if models is None else models
    logger = CsvLog(log)
    best = snapshot(models, 0, float("-inf"))
    history, rows = [], []
    step = 0
    for epoch in range(cfg.epochs):
        rate = lr_at(epoch, cfg)
        epoch_rows = []
        for low, high in iter_batches(train_set, cfg, epoch):
            if max_steps is not None and step >= max_steps:
                break
            row = train_step(models, low, high, rate)
            step += 1
            row.update(epoch=epoch, step=step, lr=rate)
            epoch_rows.append(row)
        if not epoch_rows:
            break
        val_psnr, val_ssim = evaluate(models.generator, val_set, cfg)
        epoch_rows[-1].update(val_psnr=val_psnr, val_ssim=val_ssim)
        for row in epoch_rows:
            logger.write(row)
        rows += epoch_rows
        history.append(val_psnr)
        if val_psnr > best.best_val_psnr:
            best = snapshot(models, epoch + 1, val_psnr)
    if not history:
        val_psnr, _ = evaluate(models.generator, val_set, cfg)
        best = snapshot(models, 0, val_psnr)
    last = snapshot(models, len(history), best.best_val_psnr)
    return TrainResult(best, last, history, rows)
