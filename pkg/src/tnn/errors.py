"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes inconsistent with the operation's contract."""


class OffsetRangeError(ValueError):
    """Relative offset outside the valid range for the given length."""


class NumericError(FloatingPointError, ValueError):
    """Non-finite values where finite ones are required.

    Doubly derived so numeric-abort handlers (FloatingPointError) and
    validation-style handlers (ValueError) both see it.
    """


class ConfigError(ValueError):
    """Malformed run configuration (unknown key, bad type, bad value)."""


class CheckpointError(ValueError):
    """Checkpoint container cannot be read."""


class CorruptCheckpointError(CheckpointError):
    """Manifest or blob fails a structural integrity check."""


class VersionMismatchError(CheckpointError):
    """Checkpoint format version unsupported by this build."""
