"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MuselabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MuselabError):
    """Invalid or incomplete configuration (lexicons, constants, parameters)."""


class TemplateError(MuselabError):
    """Prompt template is missing a placeholder or repeats one."""


class TransportError(MuselabError):
    """Generation backend unreachable; safe to retry."""

    retryable = True


class NotFoundError(MuselabError):
    """A referenced resource (session, clip) does not exist."""


class ClipNotFoundError(NotFoundError):
    """No audio registered for the requested prompt or clip id."""


class InputError(MuselabError):
    """Input data violates a precondition (empty, too short, wrong shape)."""


class MissingDataError(MuselabError):
    """Required records are absent; carries the offending ids."""

    def __init__(self, message: str, ids: list[str] | None = None):
        super().__init__(message)
        self.ids = ids or []


class TimelineError(MuselabError):
    """Event timeline is inconsistent (unsorted, unpaired artifact markers)."""


class DataError(MuselabError):
    """A sample value is invalid (e.g. nonpositive light intensity)."""


class StatsError(MuselabError):
    """Statistical routine called on degenerate groups."""


class PlanningError(MuselabError):
    """Session plan cannot be built from the available clip library."""


class ValidationError(MuselabError):
    """A submitted value is out of range or malformed."""


class ConflictError(MuselabError):
    """An exactly-once resource was written twice (e.g. duplicate rating)."""


class OutOfWindowError(MuselabError):
    """A command arrived outside the phase that accepts it."""


class SchemaError(MuselabError):
    """A streamed chunk or file does not match the expected column layout."""


class StateError(MuselabError):
    """Illegal state-machine usage (clock regression, bad transition)."""
