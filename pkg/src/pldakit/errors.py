"""Exception types raised by the toolkit.

Everything derives from :class:`PldaKitError` so callers (and the CLI,
which maps them to exit code 1) can catch data problems in one place
without swallowing programming errors.
"""


class PldaKitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(PldaKitError):
    """Vector or matrix dimensions do not match what an operation expects."""


class DegenerateInputError(PldaKitError):
    """Input is numerically degenerate (zero vector, non-finite entries)."""


class InsufficientDataError(PldaKitError):
    """Too few samples or speakers to estimate the requested quantity."""


class ConditioningError(PldaKitError):
    """A matrix that must be invertible is singular or indefinite."""


class MissingKeyError(PldaKitError):
    """One or more trial keys cannot be resolved in an archive."""

    def __init__(self, missing, archive_name=""):
        self.missing = list(missing)
        where = f" in {archive_name} archive" if archive_name else ""
        super().__init__(
            f"{len(self.missing)} key(s) not found{where}: "
            + ", ".join(self.missing)
        )


class LabelError(PldaKitError):
    """Trial labels are required but absent or malformed."""


class SingleClassError(PldaKitError):
    """Both target and nontarget trials are required."""


class AlignmentError(PldaKitError):
    """Subsystem score sets do not share an identical trial list."""


class ParameterError(PldaKitError, ValueError):
    """A numeric parameter is outside its legal range."""


class ParseError(PldaKitError):
    """A text file is malformed; message carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ModelLoadError(PldaKitError):
    """A serialized model fails version or invariant checks on load."""


class ConfigError(PldaKitError):
    """An experiment configuration is inconsistent or impossible."""
