"""Exception taxonomy shared across the package."""


class SkdError(Exception):
    """Base class for package-specific errors."""


class ShapeError(SkdError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(SkdError, ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class RangeError(SkdError, ValueError):
    """A numeric input lies outside its documented domain."""


class NonFiniteError(SkdError, ArithmeticError):
    """A computation produced or received NaN/Inf."""


class DegenerateFeatureError(SkdError, ValueError):
    """A feature vector collapsed to zero norm where a direction is required."""


class CheckpointError(SkdError, IOError):
    """Base class for checkpoint serialization failures."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or structural layout are wrong."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared payload is complete."""
