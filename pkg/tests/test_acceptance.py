"""One test per acceptance criterion; each records a single PASS/FAIL line.

The lines are printed as the test runs and again in the terminal summary.
"""

import io
import math
import time

import numpy as np
import pytest

from afnet import isp, losses, ops, spectral
from afnet.analysis import ms_ssim_metric, psd_curve, psnr, ssim
from afnet.ablation import generator_gmacs, ladder
from afnet.checkpoint import from_bytes, to_bytes
from afnet.config import RunConfig
from afnet.discriminators import (FourierDiscConfig, FourierDiscriminator, PatchDiscConfig,
                                  PatchDiscriminator)
from afnet.generator import CMSFEA, RDB, ChannelAttention, CMSFEAConfig, RDBConfig
from afnet.gradcheck import gradient_check
from afnet.macs import count_macs
from afnet.tensor import Tensor, no_grad
from afnet import tensor as T
from afnet.training import ArrayDataset, build_models, lr_at, restore, snapshot, train

from conftest import ACCEPTANCE_LINES
from oracles import direct_conv2d, direct_dft2, sliding_ms_ssim, sliding_ssim


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- 1. gradient suite -------------------------------------------------------

def _biased(module, rng):
    module.astype(np.float64)
    for name, p in module.named_parameters():
        if name.endswith("bias"):
            p.data = rng.uniform(-0.1, 0.1, p.shape)
    return module


def _gradient_cases(rng):
    x = Tensor(rng.uniform(0.2, 1.0, (1, 3, 6, 6)))
    y = Tensor(rng.uniform(0.2, 1.0, (1, 3, 6, 6)))
    w = Tensor(rng.standard_normal((4, 3, 3, 3)))
    b = Tensor(rng.standard_normal(4))
    att = _biased(ChannelAttention(4, 2, rng), rng)
    block = _biased(CMSFEA(CMSFEAConfig(8, 4, (1, 3, 5, 7), 2), rng), rng)
    rdb = _biased(RDB(RDBConfig(1, 2, 3, 4), rng), rng)
    patch = _biased(PatchDiscriminator(PatchDiscConfig((3, 4)), rng), rng)
    fourier = _biased(FourierDiscriminator(FourierDiscConfig("gray", (3, 4)), rng), rng)
    fourier_rgb = _biased(FourierDiscriminator(FourierDiscConfig("per_rgb_channel", (3, 4)), rng), rng)
    big_p, big_t = Tensor(rng.random((1, 1, 24, 24))), Tensor(rng.random((1, 1, 24, 24)))
    feats = [Tensor(rng.standard_normal((3, 5))) for _ in range(3)]
    scores = [Tensor(rng.standard_normal((2, 1, 3, 3))) for _ in range(2)]
    vec = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
    return {
        "add": (T.add, [x, y]), "sub": (T.sub, [x, y]), "mul": (T.mul, [x, y]), "div": (T.div, [x, y]),
        "exp": (T.exp, [vec]), "log": (T.log, [vec]), "sqrt": (T.sqrt, [vec]),
        "power": (lambda a: T.power(a, 1.5), [vec]), "mean": (lambda a: T.mean(a, axis=1), [vec]),
        "sum": (T.tsum, [vec]), "amax": (lambda a: T.amax(a, (1,)), [vec]),
        "amin": (lambda a: T.amin(a, (1,)), [vec]), "concat": (lambda a, c: T.concat([a, c]), [x, y]),
        "split": (lambda a: T.split(a, 3)[1], [x]), "getitem": (lambda a: a[:, 1:, ::2], [x]),
        "conv2d": (lambda a, c, d: ops.conv2d(a, c, d, 2, 1), [x, w, b]),
        "conv2d_grouped": (lambda a, c: ops.conv2d(a, c, groups=3), [x, Tensor(rng.standard_normal((3, 1, 3, 3)))]),
        "bicubic": (lambda a: ops.bicubic_resample(a, 2), [x]), "avg_pool2": (ops.avg_pool2, [x]),
        "global_avg_pool": (ops.global_avg_pool, [x]), "grayscale": (ops.grayscale, [x]),
        "sigmoid": (ops.sigmoid, [y]), "tanh": (ops.tanh, [y]),
        "relu": (ops.relu, [Tensor(rng.choice([-1, 1], (3, 4)) * rng.uniform(0.1, 1, (3, 4)))]),
        "leaky_relu": (ops.leaky_relu, [Tensor(rng.choice([-1, 1], (3, 4)) * rng.uniform(0.1, 1, (3, 4)))]),
        "log_magnitude": (spectral.log_magnitude, [Tensor(rng.standard_normal((1, 1, 6, 5)))]),
        "phase": (spectral.phase, [Tensor(rng.standard_normal((1, 1, 6, 5)))]),
        "channel_attention": (lambda a, *_: att(a), [Tensor(rng.standard_normal((2, 4, 3, 3)))] + att.parameters()),
        "cmsfe_a": (lambda a, *_: block(a), [Tensor(rng.standard_normal((1, 8, 4, 4))), block.branches[3].weight]),
        "rdb": (lambda a, *_: rdb(a), [Tensor(rng.standard_normal((1, 4, 4, 4)))] + rdb.parameters()),
        "patch_critic": (lambda a, _: patch(a), [Tensor(rng.random((1, 3, 8, 8))), patch.body.layers[0].weight]),
        "fourier_critic_gray": (lambda a, _: fourier(a), [Tensor(rng.random((1, 3, 8, 8))), fourier.body.head.weight]),
        "fourier_critic_rgb": (lambda a: fourier_rgb(a), [Tensor(rng.random((1, 3, 8, 8)))]),
        "l1_loss": (lambda a: losses.l1_loss(a, y), [x]),
        "ms_ssim_loss": (lambda a: losses.ms_ssim_loss(a, big_t, 2), [big_p]),
        "scal_loss": (losses.scal_loss, feats),
        "lsgan_d_loss": (losses.lsgan_d_loss, scores),
        "lsgan_g_loss": (losses.lsgan_g_loss, scores[:1]),
    }


def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    worst = {}
    for seed in range(5):
        for name, (fn, inputs) in _gradient_cases(np.random.default_rng(seed)).items():
            worst[name] = max(worst.get(name, 0.0), gradient_check(fn, inputs, eps=1e-4, seed=seed))
    elapsed = time.perf_counter() - start
    name, err = max(worst.items(), key=lambda kv: kv[1])
    ok = err < 1e-3 and elapsed < 300
    report(1, ok, f"{len(worst)} ops/modules/losses x 5 seeds, worst rel err {err:.2e} ({name}), "
                  f"{elapsed:.1f}s")


# -- 2. oracle equivalence ---------------------------------------------------

def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2)
    conv_err = 0.0
    for n, cin, h, w, cout, k, s, p, g in [(1, 3, 9, 9, 4, 3, 1, 1, 1), (2, 4, 8, 10, 6, 4, 2, 1, 2),
                                           (1, 4, 7, 7, 4, 5, 1, 2, 4)]:
        x = rng.standard_normal((n, cin, h, w)).astype(np.float32)
        wt = rng.standard_normal((cout, cin // g, k, k)).astype(np.float32)
        out = ops.conv2d(Tensor(x), Tensor(wt), stride=s, padding=p, groups=g).data
        conv_err = max(conv_err, np.max(np.abs(out - direct_conv2d(x, wt, None, s, p, g))))
    fft_err = parseval_err = trip_err = 0.0
    for shape in [(16, 16), (8, 5), (3, 7), (16, 9)]:
        x = rng.standard_normal(shape)
        spec = spectral.fft2d(x)
        ref = direct_dft2(x)
        fft_err = max(fft_err, np.max(np.abs(spec.to_complex() - ref)) / np.max(np.abs(ref)))
        energy = np.sum(x * x)
        parseval_err = max(parseval_err, abs(np.sum(spec.magnitude() ** 2) / x.size - energy) / energy)
        trip_err = max(trip_err, np.max(np.abs(spectral.ifft2d(spec) - x)) / np.max(np.abs(x)))
    a, b = rng.random((16, 16)), rng.random((16, 16))
    ssim_err = abs(ssim(a, b) - sliding_ssim(a, b)[0])
    c, d = rng.random((48, 48)), rng.random((48, 48))
    ms_err = abs(float(losses.ms_ssim(Tensor(c[None, None]), Tensor(d[None, None]), 3).data)
                 - sliding_ms_ssim(c, d, 3))
    ok = conv_err <= 1e-5 and fft_err <= 1e-6 and parseval_err <= 1e-6 and trip_err <= 1e-6 \
        and ssim_err <= 1e-5 and ms_err <= 1e-5
    report(2, ok, f"conv abs {conv_err:.1e}, dft rel {fft_err:.1e}, parseval rel {parseval_err:.1e}, "
                  f"round-trip rel {trip_err:.1e}, ssim {ssim_err:.1e}, ms-ssim {ms_err:.1e}")


# -- 3. closed-form loss values ----------------------------------------------

def test_criterion_3_closed_forms():
    ones, zeros = Tensor(np.ones((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 4, 4)))
    d_opt = float(losses.lsgan_d_loss(ones, zeros).data)
    g_opt = float(losses.lsgan_g_loss(ones).data)
    e1 = Tensor(np.array([[1.0, 0.0]]))
    e2 = Tensor(np.array([[0.0, 1.0]]))
    scal = [float(losses.scal_loss(e1, e1, e2).data), float(losses.scal_loss(e1, e1, e1).data),
            float(losses.scal_loss(e1, -e1, e1).data)]
    expect = [math.log(1 + math.exp(-2)), math.log(2), math.log(1 + math.exp(4))]
    scal_err = max(abs(s - e) for s, e in zip(scal, expect))
    x = np.random.default_rng(3).uniform(0, 0.9, (1, 3, 8, 8))
    psnr_err = abs(psnr(x + 0.1, x) - 20.0)
    ok = d_opt == 0.0 and g_opt == 0.0 and scal_err < 1e-6 and psnr_err < 1e-6
    report(3, ok, f"lsgan optima ({d_opt}, {g_opt}), scal max err {scal_err:.1e}, "
                  f"psnr 20 dB err {psnr_err:.1e}")


# -- 4 and 5. overfit experiment ---------------------------------------------

OVERFIT_STEPS = 500


def synthetic_scene(rng, n=64):
    """Smooth colour gradients, flat rectangles with hard edges, and a fine stripe texture."""
    yy, xx = np.mgrid[0:n, 0:n] / n
    img = np.empty((3, n, n))
    base = rng.uniform(0.2, 0.8, 3)
    for c in range(3):
        fy, fx, ph = rng.uniform(1, 3), rng.uniform(1, 3), rng.uniform(0, 6)
        img[c] = base[c] + 0.15 * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    for _ in range(6):
        y0, x0 = rng.integers(0, n - 16, 2)
        h, w = rng.integers(6, 20, 2)
        img[:, y0:y0 + h, x0:x0 + w] = rng.uniform(0, 1, 3)[:, None, None]
    stripes = np.sign(np.sin(2 * np.pi * rng.uniform(8, 16) * xx))
    img += 0.08 * stripes[None] * rng.uniform(0.5, 1, 3)[:, None, None]
    return np.clip(img, 0, 1).astype(np.float32)


def degrade(gt, rng):
    low = 0.4 * gt.astype(np.float64) ** 2.2 + rng.normal(0, 0.01, gt.shape)
    return np.clip(low, 0, 1).astype(np.float32)


def psd_top_quartile_l1(a, b):
    ca, cb = psd_curve(a).log_power, psd_curve(b).log_power
    start = len(ca) - len(ca) // 4
    return float(np.mean(np.abs(ca[start:] - cb[start:])))


@pytest.fixture(scope="module")
def overfit():
    rng = np.random.default_rng(0)
    gts = [synthetic_scene(rng) for _ in range(4)]
    lows = [degrade(g, rng) for g in gts]
    cfg = RunConfig(base_channels=8, rdb_count=2, crop=64, seed=0, epochs=10**6, batch_size=4,
                    lr0=1e-3)
    start = time.perf_counter()
    result = train(cfg, ArrayDataset(list(zip(lows, gts))), max_steps=OVERFIT_STEPS)
    elapsed = time.perf_counter() - start
    generator = restore(result.best).generator
    with no_grad():
        outs = generator(Tensor(np.stack(lows)))[1].data
    steps = len(result.rows)
    return dict(gts=gts, lows=lows, outs=list(outs), elapsed=elapsed, steps=steps, result=result)


def test_criterion_4_overfit(overfit):
    gts, lows, outs = overfit["gts"], overfit["lows"], overfit["outs"]
    p_in = np.mean([psnr(l, g) for l, g in zip(lows, gts)])
    p_out = np.mean([psnr(o, g) for o, g in zip(outs, gts)])
    m_in = np.mean([ms_ssim_metric(l[None], g[None]) for l, g in zip(lows, gts)])
    m_out = np.mean([ms_ssim_metric(o[None], g[None]) for o, g in zip(outs, gts)])
    ok = overfit["steps"] == OVERFIT_STEPS and p_out - p_in >= 6.0 and m_out > m_in \
        and overfit["elapsed"] <= 600
    report(4, ok, f"{overfit['steps']} G steps in {overfit['elapsed']:.0f}s: PSNR {p_in:.2f} -> {p_out:.2f} dB "
                  f"(+{p_out - p_in:.2f}), MS-SSIM {m_in:.4f} -> {m_out:.4f}")


def test_criterion_5_high_frequency_psd(overfit):
    gts, lows, outs = overfit["gts"], overfit["lows"], overfit["outs"]
    d_in = np.mean([psd_top_quartile_l1(l, g) for l, g in zip(lows, gts)])
    d_out = np.mean([psd_top_quartile_l1(o, g) for o, g in zip(outs, gts)])
    report(5, d_out < d_in, f"top-quartile PSD L1 to GT: input {d_in:.4f}, enhanced {d_out:.4f}")


# -- 6. GMAC accounting ------------------------------------------------------

def test_criterion_6_gmacs():
    gen = dict(count_macs(RunConfig(base_channels=8, rdb_count=1).generator_config(), (128, 128)).entries)
    critic = dict(count_macs(PatchDiscConfig(), (64, 64)).entries)
    refs = [
        # 3 -> 8 channels, 3x3, stride 2 from 128x128 onto a 64x64 output
        ("stage1 stem", gen["stage1.stem"], 3 * 3 * 3 * 8 * 64 * 64, 884_736),
        # squeeze of a 2-channel branch gate down to 1 unit on the pooled 1x1 map
        ("attention squeeze", gen["stage1.enc2.0.gates.0.squeeze"], 2 * 1, 2),
        # 3 -> 32 channels, 4x4, stride 2 from 64x64 onto 32x32
        ("critic layer 0", critic["body.layers.0"], 4 * 4 * 3 * 32 * 32 * 32, 1_572_864),
    ]
    exact = all(got == formula == hand for _, got, formula, hand in refs)
    g = [generator_gmacs(cfg) for _, cfg in ladder(RunConfig())]
    ordered = g[0] < g[1] < g[2] < g[3] < g[4] < g[5] and g[5] == g[6] == g[7] == g[8]
    counts = ", ".join(f"{name} {got:,}" for name, got, _, _ in refs)
    report(6, exact and ordered, f"{counts}; ladder GMACs "
                                 + " < ".join(f"{v:.2f}" for v in g[:6]) + f" = {g[6]:.2f} = {g[7]:.2f} = {g[8]:.2f}")


# -- 7. schedule and selection -----------------------------------------------

def test_criterion_7_schedule_and_selection():
    cfg = RunConfig()
    rates = [lr_at(e, cfg) for e in (0, 200, 400)]
    rng = np.random.default_rng(7)
    data = [(0.3 * h, h) for h in (rng.random((3, 32, 32)).astype(np.float32) for _ in range(2))]
    small = RunConfig(base_channels=4, attention_reduction=1, rdb_count=1, rdb_channels=4, rdb_growth=4,
                      disc_widths=(4, 4), crop=32, epochs=6, batch_size=2, lr0=1e-3, ms_ssim_levels=2)
    result = train(small, ArrayDataset(data))
    ok = rates == [1e-4, 5e-5, 2.5e-5] and result.best.best_val_psnr >= max(result.val_history)
    report(7, ok, f"lr_at(0/200/400) = {rates}; best val PSNR {result.best.best_val_psnr:.3f} >= "
                  f"max logged {max(result.val_history):.3f}")


# -- 8. determinism and serialization ----------------------------------------

def test_criterion_8_determinism():
    rng = np.random.default_rng(8)
    data = [(0.3 * h, h) for h in (rng.random((3, 32, 32)).astype(np.float32) for _ in range(3))]
    cfg = RunConfig(base_channels=4, attention_reduction=1, rdb_count=1, rdb_channels=4, rdb_growth=4,
                    disc_widths=(4, 4), crop=32, epochs=2, batch_size=2, lr0=1e-3, ms_ssim_levels=2, seed=5)
    logs, blobs = [], []
    for _ in range(2):
        log = io.StringIO()
        result = train(cfg, ArrayDataset(data), log=log)
        logs.append(log.getvalue())
        blobs.append(to_bytes(result.best) + to_bytes(result.last))
    models = restore(result.last)
    back = restore(from_bytes(to_bytes(result.last)))
    x = Tensor(rng.random((1, 3, 32, 32)).astype(np.float32))
    with no_grad():
        same = np.array_equal(models.generator(x)[1].data, back.generator(x)[1].data) and \
            np.array_equal(models.patch(x).data, back.patch(x).data)
    ok = logs[0] == logs[1] and blobs[0] == blobs[1] and same
    report(8, ok, f"logs identical {logs[0] == logs[1]}, checkpoints identical {blobs[0] == blobs[1]}, "
                  f"round-trip forward bit-identical {same}")


# -- 9. RAW path -------------------------------------------------------------

def test_criterion_9_raw_path():
    span = 16383 - 512
    cell = isp.pack_raw(isp.BayerMosaic(np.array([[1000, 800], [800, 600]]), "RGGB")).data[0, :, 0, 0]
    expect = (np.array([1000, 800, 600, 800]) - 512) / span
    clamp = isp.pack_raw(isp.BayerMosaic(np.array([[512, 100], [16383, 20000]]))).data[0, :, 0, 0]
    levels_ok = np.array_equal(cell, expect.astype(np.float32)) and np.array_equal(clamp, [0, 0, 1, 1])
    rng = np.random.default_rng(9)
    cfg = RunConfig(base_channels=4, attention_reduction=1, rdb_count=1, rdb_channels=4, rdb_growth=4,
                    input_mode="raw4", crop=64)
    generator = restore(_init_checkpoint(cfg)).generator
    mosaic = isp.BayerMosaic(rng.integers(512, 16384, (128, 192)).astype(np.uint16))
    with no_grad():
        out = generator(isp.pack_raw(mosaic))[1]
    hw3 = out.data[0].transpose(1, 2, 0).shape
    ok = levels_ok and hw3 == (128, 192, 3)
    report(9, ok, f"pack black/white cases exact {levels_ok}; 128x192 mosaic -> {hw3[0]}x{hw3[1]}x{hw3[2]} sRGB")


def _init_checkpoint(cfg):
    return snapshot(build_models(cfg), 0, float("-inf"))
