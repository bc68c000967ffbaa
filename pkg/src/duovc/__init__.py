"""Dual-mode voice conversion library.

A self-contained feature-to-feature voice converter that runs in two
inference modes from one jointly trained model: an offline mode with
full-utterance context and a streaming mode whose chunked inference is
bit-equivalent to the offline causal forward pass.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DuoVCError,
    FormatError,
    InsufficientContextError,
    ModeError,
    NonFiniteError,
    ShapeError,
)
from .rng import Rng
from .tensor import Tensor, no_grad

__all__ = [
    "ConfigError",
    "ContractError",
    "DuoVCError",
    "FormatError",
    "InsufficientContextError",
    "ModeError",
    "NonFiniteError",
    "Rng",
    "ShapeError",
    "Tensor",
    "no_grad",
    "__version__",
]
