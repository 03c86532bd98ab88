"""Exception hierarchy.

Everything raised on purpose by the package derives from ``Group3DError`` so
the CLI can map failures onto exit codes: validation/parse problems exit 1,
provider problems exit 2.
"""

from __future__ import annotations


class Group3DError(Exception):
    """Base class. ``stage`` is filled in by the pipeline when known."""

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ConfigurationError(Group3DError, ValueError):
    """Invalid parameter value (non-positive focal length, bad threshold, ...)."""


class ValidationError(Group3DError, ValueError):
    """Input data violates a structural invariant."""


class ParseError(ValidationError):
    """Malformed file content. Carries the path and 1-based line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class LoadError(Group3DError, OSError):
    """A required file is missing or unreadable."""


class AlignmentError(Group3DError, ValueError):
    """Pose alignment had no jointly valid depth to calibrate scale."""


class UnknownCategoryError(Group3DError, KeyError):
    """A category was looked up that is not part of the scene vocabulary."""

    def __str__(self) -> str:  # KeyError would repr() the message
        return Group3DError.__str__(self)


class ProviderDataError(ValidationError):
    """Provider output is inconsistent (missing presence score, stray category)."""


class ProviderError(Group3DError, RuntimeError):
    """Transport to a live provider failed after all retries."""


class EvaluationError(Group3DError, ValueError):
    """Metrics cannot be computed (e.g. no ground-truth classes)."""
