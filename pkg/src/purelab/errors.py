"""Exception hierarchy shared across the package.

Every error raised by purelab derives from PurelabError so callers can
catch the whole family at once (the CLI maps them to exit codes).
"""


class PurelabError(Exception):
    """Base class for all purelab errors."""


class ConfigurationError(PurelabError):
    """Invalid shapes, bounds, schedules, plans or other configuration."""


class NumericDomainError(PurelabError):
    """An operation was evaluated outside its numeric domain (log of a
    non-positive value, division by zero, non-finite state)."""


class UsageError(PurelabError):
    """API misuse: non-scalar backward target, tensor on a foreign tape,
    impure checkpoint segment, unknown CLI subcommand."""


class DataError(PurelabError):
    """Malformed dataset content, e.g. a label outside the class range."""


class TrainingError(PurelabError):
    """Training diverged (non-finite loss)."""


class AttackError(PurelabError):
    """An attack's gradient pathway produced a non-finite gradient."""


class IntegrityError(PurelabError):
    """A checkpoint file failed its magic/version/hash verification."""
