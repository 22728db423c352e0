"""Exception types shared across the package."""


class PoplexError(Exception):
    """Base class for errors raised by this package."""


class MalformedInputError(PoplexError):
    """An input file violates its documented format."""


class ConfigError(PoplexError):
    """A configuration is invalid or infeasible."""


class FormatError(PoplexError):
    """A binary artifact has a bad magic string or corrupt layout."""
