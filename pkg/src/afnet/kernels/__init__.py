"""Hot convolution kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless ``AFNET_KERNELS=numpy``.
Both paths produce bit-identical results (pure copies and ordered additions).
"""

from .. import _settings
from . import _numpy_impl as numpy_impl

try:
    from . import _numba_impl as numba_impl
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba_impl = None

if numba_impl is not None and _settings.requested_backend() != "numpy":
    BACKEND = "numba"
    _active = numba_impl
else:
    BACKEND = "numpy"
    _active = numpy_impl


def im2col(xpad, k, stride, ho, wo):
    return _active.im2col(xpad, k, stride, ho, wo)


def col2im(cols, hp, wp, stride):
    return _active.col2im(cols, hp, wp, stride)
