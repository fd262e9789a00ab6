"""Exception types shared across the toolkit.

Two families matter for the CLI: InputError (bad files or arguments,
exit code 1) and ContractError (an internal invariant was violated,
exit code 2).
"""


class InputError(Exception):
    """A user-supplied file or argument is invalid."""


class CocoParseError(InputError):
    """Annotation JSON could not be decoded; message carries the byte offset."""


class SchemaError(InputError):
    """A required field is missing or malformed; message names the field."""


class ReferentialError(InputError):
    """A record references an id that does not exist."""


class UnsupportedImageError(InputError):
    """Image file has an unsupported mode or bit depth."""


class ConfigError(InputError):
    """Invalid configuration value."""


class ContractError(Exception):
    """An operation precondition or invariant was violated."""


class PlacementRejected(Exception):
    """A sampled paste position violates a placement constraint; caller may retry."""
