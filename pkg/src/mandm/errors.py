"""Exception hierarchy shared by all mandm modules."""

from __future__ import annotations


class MandmError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MandmError, ValueError):
    """Input violates a documented invariant (bad value, bad shape)."""


class UnknownNodeError(ValidationError):
    """Referenced node_id is not part of the cluster topology."""


class UnknownUserError(ValidationError):
    """Referenced user_id is not registered."""


class UnknownJobError(ValidationError):
    """Update/End for a job_id that is not active."""


class DuplicateJobError(ValidationError):
    """Start for a job_id that is already active."""


class ConfigError(MandmError):
    """Service configuration file is missing, malformed, or inconsistent."""


class SegmentFormatError(MandmError, ValueError):
    """A history segment file does not conform to the CSV grammar.

    The message always names the offending line number and reason.
    """


class ArchiveError(MandmError):
    """Archive-level failure: timestamp collision, unreadable directory."""


class StoreError(MandmError):
    """Triple-store storage failure (bad file header, I/O error)."""


class LoadBusyError(MandmError):
    """A history bulk load is already in flight."""
