"""Exception types shared across the package."""


class DuoVCError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(DuoVCError, ValueError):
    """Tensor dimensions do not match what an operation requires."""


class ConfigError(DuoVCError, ValueError):
    """A configuration value is out of range or inconsistent."""


class ModeError(DuoVCError, ValueError):
    """An operation was invoked in an inference mode it does not support."""


class FormatError(DuoVCError, ValueError):
    """A binary file (checkpoint or feature file) is malformed."""


class NonFiniteError(DuoVCError, ArithmeticError):
    """A NaN or Inf value was produced; names the first offending op."""


class ContractError(DuoVCError, ValueError):
    """An operation was called in a way that violates its contract."""


class InsufficientContextError(DuoVCError, ValueError):
    """A sequence is too short for the requested prediction horizon."""
