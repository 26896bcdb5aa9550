"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def gradient_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-4,
                   seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``fn`` maps the ``inputs`` (float64 tensors, checked in place) to a tensor; a
    non-scalar output is contracted with a fixed random projection first.  The
    error per element is |a - n| / max(1e-8, |a| + |n|).
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("gradient_check needs float64 inputs")
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None

    probe = fn(*inputs)
    weights = np.random.default_rng(seed).standard_normal(probe.shape)

    def objective() -> float:
        return float(np.sum(fn(*inputs).data * weights))

    out = fn(*inputs)
    out.backward(weights)

    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = objective()
            flat[i] = orig - eps
            minus = objective()
            flat[i] = orig
            numeric[i] = (plus - minus) / (2 * eps)
        a = analytic.reshape(-1)
        err = np.abs(a - numeric) / np.maximum(1e-8, np.abs(a) + np.abs(numeric))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
