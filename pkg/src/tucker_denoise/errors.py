"""Exception types shared across the package."""


class DenoiseError(Exception):
    """Base class for all package errors."""


class DomainError(DenoiseError, ValueError):
    """An argument lies outside the operation's domain (bad shape, rank, mode...)."""


class NumericError(DenoiseError, ArithmeticError):
    """A numerical routine failed to converge or produced an unusable result."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class StateError(DenoiseError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class ParseError(DenoiseError, ValueError):
    """A file could not be parsed. ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset=None):
        where = "" if offset is None else f" at byte {offset}"
        super().__init__(f"{message}{where}")
        self.offset = offset


class ConfigError(DenoiseError, ValueError):
    """Invalid or unknown configuration key/value."""
