"""Exception hierarchy shared across the package.

The three leaf categories map onto the CLI exit codes: ConfigError -> 1,
BackendError -> 2, DataError -> 3.
"""


class IclSelectError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IclSelectError):
    """Invalid or unresolvable experiment configuration."""


class BackendError(IclSelectError):
    """A scoring or embedding backend failed or returned a malformed reply."""


class DataError(IclSelectError):
    """Dataset, embedding-store, or persisted-record contents are invalid."""


class SelectionError(DataError):
    """A demonstration-selection precondition cannot be met (e.g. pool too small)."""
