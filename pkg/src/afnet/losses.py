"""Generator and critic objectives.

Five generator terms are combined with non-negative weights: pixel L1, 1 - MS-SSIM,
a supervised contrastive term on critic features (SCAL), and least-squares
adversarial terms against the patch and Fourier critics.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, fields

import numpy as np

from . import ops
from .errors import DimensionError, ParameterError
from .tensor import (Tensor, absolute, add, as_tensor, clamp_min, exp, log, mean, mul,
                     no_grad, power, sqrt, sub, tsum)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_FLOOR = 1e-6
SCAL_TAU = 0.5
COSINE_EPS = 1e-8

TERMS = ("l1", "ms_ssim", "scal", "p_adv", "f_adv")


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    ms_ssim: float = 1.0
    scal: float = 0.01
    p_adv: float = 0.5
    f_adv: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ParameterError(f"loss weight {f.name} must be >= 0")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in TERMS}


@dataclass
class LossBreakdown:
    """Unweighted and weighted values of every computed term plus the total."""

    terms: dict[str, float] = field(default_factory=dict)
    weighted: dict[str, float] = field(default_factory=dict)
    total: Tensor | None = None

    @property
    def total_value(self) -> float:
        return 0.0 if self.total is None else float(self.total.data)


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def l1_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target, like=pred)
    _same_shape(pred, target, "l1_loss")
    return mean(absolute(sub(pred, target)))


# -- SSIM family -------------------------------------------------------------

def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


@functools.lru_cache(maxsize=64)
def _valid_filter_matrix(n: int) -> np.ndarray:
    g = gaussian_window()
    mat = np.zeros((n - SSIM_WINDOW + 1, n))
    for o in range(mat.shape[0]):
        mat[o, o:o + SSIM_WINDOW] = g
    mat.setflags(write=False)
    return mat


def _filter(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    return ops.separable(x, _valid_filter_matrix(h), _valid_filter_matrix(w))


def ssim_maps(x: Tensor, y: Tensor, peak: float = 1.0) -> tuple[Tensor, Tensor]:
    """Local SSIM and contrast-structure maps over valid 11x11 Gaussian windows."""
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ParameterError(f"SSIM needs spatial size >= {SSIM_WINDOW}, got {x.shape[-2:]}")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mx, my = _filter(x), _filter(y)
    mx2, my2, mxy = mul(mx, mx), mul(my, my), mul(mx, my)
    vx = sub(_filter(mul(x, x)), mx2)
    vy = sub(_filter(mul(y, y)), my2)
    cov = sub(_filter(mul(x, y)), mxy)
    cs = (2.0 * cov + c2) / (vx + vy + c2)
    luminance = (2.0 * mxy + c1) / (mx2 + my2 + c1)
    return mul(luminance, cs), cs


def ms_ssim_weights(levels: int) -> np.ndarray:
    if not 1 <= levels <= len(MS_SSIM_WEIGHTS):
        raise ParameterError(f"MS-SSIM levels must be in 1..{len(MS_SSIM_WEIGHTS)}")
    w = np.asarray(MS_SSIM_WEIGHTS[:levels])
    return w / w.sum()


def ms_ssim(pred: Tensor, target, levels: int = 3) -> Tensor:
    """Multi-scale SSIM averaged over batch and channels (a scalar tensor).

    Per-level contrast-structure means and the final-level SSIM mean are floored at
    1e-6 before the weighted geometric combination.
    """
    target = as_tensor(target, like=pred)
    _same_shape(pred, target, "ms_ssim")
    weights = ms_ssim_weights(levels)
    need = 2 ** (levels - 1) * SSIM_WINDOW
    if min(pred.shape[-2:]) < need:
        raise ParameterError(f"{levels}-level MS-SSIM needs min(H, W) >= {need}, got {pred.shape[-2:]}")
    x, y = pred, target
    result = None
    for level, w in enumerate(weights):
        full, cs = ssim_maps(x, y)
        last = level == levels - 1
        score = mean(full if last else cs, axis=(-2, -1))
        factor = power(clamp_min(score, MS_SSIM_FLOOR), float(w))
        result = factor if result is None else mul(result, factor)
        if not last:
            x, y = ops.avg_pool2(x), ops.avg_pool2(y)
    return mean(result)


def ms_ssim_loss(pred: Tensor, target, levels: int = 3) -> Tensor:
    return 1.0 - ms_ssim(pred, target, levels)


# -- contrastive and adversarial terms ---------------------------------------

def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine of N x F feature matrices; norms are eps-guarded."""
    _same_shape(a, b, "cosine_similarity")
    eps2 = COSINE_EPS * COSINE_EPS
    na = sqrt(tsum(mul(a, a), axis=1) + eps2)
    nb = sqrt(tsum(mul(b, b), axis=1) + eps2)
    return tsum(mul(a, b), axis=1) / mul(na, nb)


def scal_from_cosines(cos_ap, cos_an, tau: float = SCAL_TAU) -> Tensor:
    """-log softmax of the positive pair against one negative, batch-averaged."""
    cos_ap, cos_an = as_tensor(cos_ap), as_tensor(cos_an)
    return mean(log(1.0 + exp((cos_an - cos_ap) * (1.0 / tau))))


def scal_loss(anchor: Tensor, positive, negative, tau: float = SCAL_TAU) -> Tensor:
    """Contrastive term: enhanced (anchor) pulled toward ground truth (positive) and
    pushed from the degraded input (negative) in critic feature space."""
    positive = as_tensor(positive, like=anchor)
    negative = as_tensor(negative, like=anchor)
    return scal_from_cosines(cosine_similarity(anchor, positive),
                             cosine_similarity(anchor, negative), tau)


def lsgan_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    real = sub(real_scores, 1.0)
    return add(0.5 * mean(mul(real, real)), 0.5 * mean(mul(fake_scores, fake_scores)))


def lsgan_g_loss(fake_scores: Tensor) -> Tensor:
    d = sub(fake_scores, 1.0)
    return 0.5 * mean(mul(d, d))


def total_generator_loss(pred: Tensor, target, disc_outputs: dict | None = None,
                         feats: tuple | None = None, weights: LossWeights = LossWeights(),
                         ms_ssim_levels: int = 3, tau: float = SCAL_TAU) -> LossBreakdown:
    """Weighted sum of the five generator terms.

    ``disc_outputs`` maps ``"p_adv"``/``"f_adv"`` to critic scores on ``pred``;
    ``feats`` is (anchor, positive, negative) for SCAL.  Terms whose inputs are absent
    are skipped; zero-weight terms are evaluated for logging but kept out of the
    graph.
    """
    disc_outputs = disc_outputs or {}
    builders = {
        "l1": lambda: l1_loss(pred, target),
        "ms_ssim": lambda: ms_ssim_loss(pred, target, ms_ssim_levels),
    }
    if feats is not None:
        builders["scal"] = lambda: scal_loss(*feats, tau=tau)
    for key in ("p_adv", "f_adv"):
        if disc_outputs.get(key) is not None:
            builders[key] = functools.partial(lsgan_g_loss, disc_outputs[key])

    out = LossBreakdown()
    wdict = weights.as_dict()
    for name in TERMS:
        if name not in builders:
            continue
        w = wdict[name]
        if w > 0:
            term = builders[name]()
            weighted = term if w == 1.0 else mul(term, w)
            out.total = weighted if out.total is None else add(out.total, weighted)
        else:
            with no_grad():
                term = builders[name]()
        out.terms[name] = float(term.data)
        out.weighted[name] = w * out.terms[name]
    if out.total is None:
        out.total = Tensor(np.zeros((), dtype=pred.dtype))
    return out
