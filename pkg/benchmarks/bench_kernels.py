"""Compare the numba and pure-numpy im2col/col2im kernels.

Run:  python3 benchmarks/bench_kernels.py [--repeat 20]

Also times a full conv2d forward+backward under each backend in a subprocess,
since the backend is fixed when afnet is imported (AFNET_KERNELS=numpy).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from afnet.kernels import _numpy_impl, _numba_impl

CASES = [
    # (N, C, H, W, k, stride)
    (4, 16, 64, 64, 3, 1),
    (4, 32, 128, 128, 3, 1),
    (4, 16, 128, 128, 7, 1),
    (4, 64, 64, 64, 4, 2),
]

CONV_SNIPPET = """
import time, numpy as np
from afnet import ops, kernels
from afnet.tensor import Tensor
rng = np.random.default_rng(0)
x = Tensor(rng.random((4, 32, 128, 128), dtype=np.float32), requires_grad=True)
w = Tensor(rng.standard_normal((32, 32, 3, 3)).astype(np.float32), requires_grad=True)
ops.conv2d(x, w, padding=1).sum().backward()
best = float("inf")
for _ in range({repeat}):
    t = time.perf_counter()
    ops.conv2d(x, w, padding=1).sum().backward()
    best = min(best, time.perf_counter() - t)
print(kernels.BACKEND, best)
"""


def best_time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=10)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'case':<28}{'kernel':<8}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for n, c, h, w, k, s in CASES:
        pad = k // 2
        xpad = rng.random((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float32)
        ho = (h + 2 * pad - k) // s + 1
        wo = (w + 2 * pad - k) // s + 1
        cols_np = _numpy_impl.im2col(xpad, k, s, ho, wo)
        cols_nb = _numba_impl.im2col(xpad, k, s, ho, wo)
        assert np.array_equal(cols_np, cols_nb)
        back_np = _numpy_impl.col2im(cols_np, xpad.shape[2], xpad.shape[3], s)
        assert np.array_equal(back_np, _numba_impl.col2im(cols_np, xpad.shape[2], xpad.shape[3], s))

        label = f"{n}x{c}x{h}x{w} k{k} s{s}"
        for name, f_np, f_nb in (
            ("im2col", lambda: _numpy_impl.im2col(xpad, k, s, ho, wo),
             lambda: _numba_impl.im2col(xpad, k, s, ho, wo)),
            ("col2im", lambda: _numpy_impl.col2im(cols_np, xpad.shape[2], xpad.shape[3], s),
             lambda: _numba_impl.col2im(cols_np, xpad.shape[2], xpad.shape[3], s)),
        ):
            t_np, t_nb = best_time(f_np, args.repeat), best_time(f_nb, args.repeat)
            print(f"{label:<28}{name:<8}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.2f}x")

    print("\nconv2d 4x32x128x128, 3x3, forward+backward (best of runs):")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, AFNET_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", CONV_SNIPPET.format(repeat=args.repeat)],
                             env=env, capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<6} {float(out[1]) * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
