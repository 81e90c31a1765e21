"""Exception hierarchy shared across the package."""


class SoftpcError(Exception):
    """Base class for all library errors."""


class ParameterError(SoftpcError):
    """An argument violates a documented precondition."""


class DegenerateCloudError(ParameterError):
    """Point cloud has no spatial extent (all points coincide)."""


class ParseError(SoftpcError):
    """A cloud file could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class NumericalError(SoftpcError):
    """An iterative numerical procedure failed to converge or blew up."""


class CheckpointError(SoftpcError):
    """A model checkpoint is corrupt, truncated, or version-incompatible."""
