"""numba-compiled patch extraction; same contract as the numpy kernels."""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(xpad, k, stride, ho, wo, cols):
    n, c = xpad.shape[0], xpad.shape[1]
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    for y in range(ho):
                        row = y * stride + i
                        for x in range(wo):
                            cols[b, ch, i, j, y, x] = xpad[b, ch, row, x * stride + j]
    return cols


@njit(cache=True)
def _col2im(cols, stride, out):
    n, c, k = cols.shape[0], cols.shape[1], cols.shape[2]
    ho, wo = cols.shape[4], cols.shape[5]
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    for y in range(ho):
                        row = y * stride + i
                        for x in range(wo):
                            out[b, ch, row, x * stride + j] += cols[b, ch, i, j, y, x]
    return out


def im2col(xpad: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xpad.shape[:2]
    cols = np.empty((n, c, k, k, ho, wo), dtype=xpad.dtype)
    return _im2col(np.ascontiguousarray(xpad), k, stride, ho, wo, cols)


def col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    n, c = cols.shape[:2]
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    return _col2im(np.ascontiguousarray(cols), stride, out)
