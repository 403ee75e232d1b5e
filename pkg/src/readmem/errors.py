"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, stream specification, or argument."""


class ShapeMismatchError(ValueError):
    """Embedding or tensor dimensions do not agree."""


class NonFiniteError(ValueError):
    """An embedding contains NaN or infinite entries."""


class DegenerateKeyError(ValueError):
    """A key embedding has numerically zero norm and cannot be normalized."""


class ProtectedSlotError(ValueError):
    """Attempted to replace the protected annotated slot."""


class FrameOrderError(ValueError):
    """Observations must arrive with strictly increasing frame indices."""


class ContainerError(ValueError):
    """Malformed or corrupt stream container file."""
