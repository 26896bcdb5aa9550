"""Two-stage low-light image enhancement with spatial and Fourier-domain critics."""

from .config import RunConfig, load_config
from .errors import AFNetError, DataError, DimensionError, FormatError, NumericError, ParameterError
from .generator import Generator, GeneratorConfig
from .discriminators import FourierDiscriminator, PatchDiscriminator
from .tensor import Tensor, no_grad

__all__ = [
    "AFNetError", "DataError", "DimensionError", "FormatError", "FourierDiscriminator",
    "Generator", "GeneratorConfig", "NumericError", "ParameterError", "PatchDiscriminator",
    "RunConfig", "Tensor", "load_config", "no_grad",
]
__version__ = "0.1.0"
