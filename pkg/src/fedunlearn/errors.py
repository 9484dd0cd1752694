"""Exception types shared across the package."""


class FedUnlearnError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(FedUnlearnError, ValueError):
    """An argument violates an operation's contract."""


class DimensionError(FedUnlearnError, ValueError):
    """Vector or matrix shapes do not line up."""


class DegenerateVectorError(FedUnlearnError, ValueError):
    """A zero-norm vector was passed where a direction is required."""


class NumericError(FedUnlearnError, ArithmeticError):
    """A computation produced or received a non-finite value."""


class FormatError(FedUnlearnError, ValueError):
    """A serialized file is malformed; the message names the location."""


class StateError(FedUnlearnError, RuntimeError):
    """An operation was invoked on an object in the wrong state."""


class UnlearningImpossibleError(FedUnlearnError, RuntimeError):
    """No archived round retains any client after removing the targets."""
