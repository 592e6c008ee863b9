"""Exception types raised across the package."""


class PeraError(Exception):
    """Base class for all library errors."""


class ShapeError(PeraError, ValueError):
    pass


class DomainError(PeraError, ValueError):
    pass


class ConfigError(PeraError, ValueError):
    pass


class ParseError(PeraError, ValueError):
    """Malformed adapter or config payload.

    ``offset`` is the byte offset into the payload where the problem was found.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class VersionError(ParseError):
    pass


class DivergenceError(PeraError, RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"loss became non-finite ({loss!r}) at step {step}")
        self.step = step
        self.loss = loss


class InvariantError(PeraError, AssertionError):
    """A mathematical guarantee was violated; always a library bug."""
