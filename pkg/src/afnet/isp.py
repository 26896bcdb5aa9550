"""RAW Bayer ingestion and PNG image I/O.

A RAW frame is a 16-bit single-channel PNG mosaic plus a plain-text sidecar with
``key = value`` lines (``cfa_pattern``, ``black_level``, ``white_level``).  Packing
normalises each 2x2 CFA cell into one pixel with channels ordered (R, G1, B, G2),
where G1 shares a row with R and G2 shares a row with B.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .tensor import Tensor

DEFAULT_BLACK_LEVEL = 512
DEFAULT_WHITE_LEVEL = 16383

# (row, col) of R, G1, B, G2 inside the 2x2 cell
CFA_SITES = {
    "RGGB": ((0, 0), (0, 1), (1, 1), (1, 0)),
    "BGGR": ((1, 1), (1, 0), (0, 0), (0, 1)),
    "GRBG": ((0, 1), (0, 0), (1, 0), (1, 1)),
    "GBRG": ((1, 0), (1, 1), (0, 1), (0, 0)),
}


@dataclass
class BayerMosaic:
    data: np.ndarray
    cfa_pattern: str = "RGGB"
    black_level: int = DEFAULT_BLACK_LEVEL
    white_level: int = DEFAULT_WHITE_LEVEL

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise DimensionError(f"mosaic must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] % 2 or self.data.shape[1] % 2:
            raise DimensionError(f"mosaic dimensions must be even, got {self.data.shape}")
        if self.cfa_pattern not in CFA_SITES:
            raise ParameterError(f"unknown CFA pattern {self.cfa_pattern!r}")
        if not 0 <= self.black_level < self.white_level <= 65535:
            raise ParameterError(
                f"need 0 <= black_level < white_level <= 65535, got {self.black_level}, {self.white_level}")


def pack_raw(mosaic: BayerMosaic, gain: float = 1.0) -> Tensor:
    """Normalise and pack a mosaic into a 1 x 4 x H/2 x W/2 tensor (R, G1, B, G2)."""
    span = float(mosaic.white_level - mosaic.black_level)
    norm = (mosaic.data.astype(np.float64) - mosaic.black_level) / span
    if gain != 1.0:
        norm = norm * gain
    norm = np.clip(norm, 0.0, 1.0)
    planes = [norm[r::2, c::2] for r, c in CFA_SITES[mosaic.cfa_pattern]]
    return Tensor(np.stack(planes)[None].astype(np.float32))


def unpack_raw(packed: Tensor | np.ndarray, cfa_pattern: str = "RGGB",
               black_level: int = DEFAULT_BLACK_LEVEL,
               white_level: int = DEFAULT_WHITE_LEVEL) -> BayerMosaic:
    """Inverse of :func:`pack_raw` (values rounded to the nearest code)."""
    data = packed.data if isinstance(packed, Tensor) else np.asarray(packed)
    if data.ndim == 4:
        data = data[0]
    if data.shape[0] != 4:
        raise DimensionError(f"packed RAW must have 4 channels, got {data.shape}")
    h, w = data.shape[1:]
    codes = np.rint(data.astype(np.float64) * (white_level - black_level) + black_level)
    mosaic = np.zeros((2 * h, 2 * w), dtype=np.uint16)
    for plane, (r, c) in zip(codes, CFA_SITES[cfa_pattern]):
        mosaic[r::2, c::2] = plane
    return BayerMosaic(mosaic, cfa_pattern, black_level, white_level)


# -- sidecar metadata --------------------------------------------------------

def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def sidecar_path(mosaic_path: str | Path) -> Path:
    return Path(mosaic_path).with_suffix(".txt")


def read_sidecar(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"missing RAW sidecar {path}")
    meta = parse_key_values(path.read_text(encoding="utf-8"))
    unknown = set(meta) - {"cfa_pattern", "black_level", "white_level"}
    if unknown:
        raise FormatError(f"{path}: unknown sidecar keys {sorted(unknown)}")
    if "cfa_pattern" not in meta:
        raise FormatError(f"{path}: sidecar lacks cfa_pattern")
    try:
        return {
            "cfa_pattern": meta["cfa_pattern"].upper(),
            "black_level": int(meta.get("black_level", DEFAULT_BLACK_LEVEL)),
            "white_level": int(meta.get("white_level", DEFAULT_WHITE_LEVEL)),
        }
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load_raw(path: str | Path) -> BayerMosaic:
    path = Path(path)
    meta = read_sidecar(sidecar_path(path))
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise FormatError(f"cannot decode {path}")
    if data.dtype != np.uint16 or data.ndim != 2:
        raise FormatError(f"{path}: RAW mosaic must be a 16-bit single-channel PNG")
    return BayerMosaic(data, **meta)


def save_raw(mosaic: BayerMosaic, path: str | Path) -> None:
    path = Path(path)
    if not cv2.imwrite(str(path), mosaic.data.astype(np.uint16)):
        raise FormatError(f"cannot write {path}")
    sidecar_path(path).write_text(
        f"cfa_pattern = {mosaic.cfa_pattern}\n"
        f"black_level = {mosaic.black_level}\n"
        f"white_level = {mosaic.white_level}\n", encoding="utf-8")


# -- sRGB PNG ----------------------------------------------------------------

def load_image(path: str | Path) -> Tensor:
    """Read an 8- or 16-bit PNG as a 1 x C x H x W float32 tensor in [0, 1] (RGB order)."""
    path = Path(path)
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise FormatError(f"cannot decode {path}")
    if data.dtype == np.uint8:
        scale = 255.0
    elif data.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}")
    if data.ndim == 2:
        data = data[:, :, None]
    elif data.shape[2] == 4:
        data = cv2.cvtColor(data, cv2.COLOR_BGRA2RGB)
    elif data.shape[2] == 3:
        data = cv2.cvtColor(data, cv2.COLOR_BGR2RGB)
    arr = (data.astype(np.float64) / scale).transpose(2, 0, 1)[None]
    return Tensor(arr.astype(np.float32))


def quantize(values: np.ndarray, bits: int = 8) -> np.ndarray:
    """Clamp to [0, 1] and quantise with round-half-up."""
    top = (1 << bits) - 1
    q = np.floor(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * top + 0.5)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


def save_image(image: Tensor | np.ndarray, path: str | Path, bits: int = 8) -> None:
    """Write a (1 x) C x H x W image in [0, 1] as an 8- or 16-bit PNG."""
    if bits not in (8, 16):
        raise FormatError(f"unsupported bit depth {bits}")
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise DimensionError("save_image writes one image at a time")
        data = data[0]
    if data.ndim == 2:
        data = data[None]
    if data.shape[0] not in (1, 3):
        raise DimensionError(f"cannot save a {data.shape[0]}-channel image")
    pixels = quantize(data, bits).transpose(1, 2, 0)
    if pixels.shape[2] == 3:
        pixels = cv2.cvtColor(pixels, cv2.COLOR_RGB2BGR)
    else:
        pixels = pixels[:, :, 0]
    if not cv2.imwrite(str(path), np.ascontiguousarray(pixels)):
        raise FormatError(f"cannot write {path}")
