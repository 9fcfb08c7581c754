"""Exception hierarchy shared across the package.

Everything raised on purpose derives from FailSafeError so callers can
catch one type at the CLI boundary and map it to an exit code.
"""


class FailSafeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FailSafeError):
    """Invalid or inconsistent configuration. Message names the offending key."""


class InvalidPoseError(FailSafeError):
    """Pose fields out of contract (non-finite, zero-norm quaternion, bad gripper)."""


class EmptyPlanError(FailSafeError):
    """Interpolation or plan construction asked for zero steps."""


class InvalidCommandError(FailSafeError):
    """Simulator got a non-finite or otherwise malformed target."""


class SceneError(FailSafeError):
    """Malformed scene: missing object, duplicate id, bad geometry."""


class SceneGenerationError(SceneError):
    """Random placement could not satisfy workspace constraints."""


class DatasetFormatError(FailSafeError):
    """Malformed dataset line. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class DatasetVersionError(DatasetFormatError):
    """Dataset schema version does not match this library."""


class MetricsError(FailSafeError):
    """Metrics requested over an empty evaluation set."""


class ContractViolation(FailSafeError):
    """An internal precondition was broken (e.g. exporting an unverified action)."""
