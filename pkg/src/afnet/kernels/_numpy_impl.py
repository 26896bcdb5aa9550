"""Pure-numpy patch extraction: one strided slice copy per kernel offset."""

import numpy as np


def im2col(xpad: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xpad.shape[:2]
    cols = np.empty((n, c, k, k, ho, wo), dtype=xpad.dtype)
    hspan = stride * (ho - 1) + 1
    wspan = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xpad[:, :, i:i + hspan:stride, j:j + wspan:stride]
    return cols


def col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    n, c, k, _, ho, wo = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    hspan = stride * (ho - 1) + 1
    wspan = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + hspan:stride, j:j + wspan:stride] += cols[:, :, i, j]
    return out
