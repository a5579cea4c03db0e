"""Exception types shared across the package."""


class FramecastError(Exception):
    """Base class for all package errors."""


class ValidationError(FramecastError):
    """A config or argument violates its invariants."""


class DimensionError(FramecastError):
    """A tensor has an incompatible shape; the message names the offending axis."""


class GlyphSourceError(FramecastError):
    """The digit glyph source is missing or unreadable."""


class DatasetError(FramecastError):
    """A dataset file or folder cannot be read or is inconsistent."""


class CheckpointError(FramecastError):
    """A checkpoint file is corrupt, truncated, or has an unknown format version."""


class ConfigConflictError(FramecastError):
    """Resume was attempted with a config that differs from the checkpoint's.

    ``diff`` holds one line per differing key.
    """

    def __init__(self, message, diff=()):
        super().__init__(message)
        self.diff = list(diff)


class TrainingFault(FramecastError):
    """A non-finite loss or gradient interrupted training."""
