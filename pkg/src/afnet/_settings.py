"""Process-wide switches: checked mode and kernel backend selection.

``AFNET_CHECKED=1`` turns on NaN/Inf scanning at op boundaries.
``AFNET_KERNELS=numpy`` forces the pure-numpy kernels even when numba is importable.
"""

import contextlib
import os

_checked = os.environ.get("AFNET_CHECKED", "0") not in ("0", "", "false", "no")


def checked() -> bool:
    return _checked


def set_checked(flag: bool) -> None:
    global _checked
    _checked = bool(flag)


@contextlib.contextmanager
def checked_mode(flag: bool = True):
    prev = _checked
    set_checked(flag)
    try:
        yield
    finally:
        set_checked(prev)


def requested_backend() -> str:
    return os.environ.get("AFNET_KERNELS", "numba").strip().lower()
