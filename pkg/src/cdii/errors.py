"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """A file on disk does not follow the expected text format."""


class NumericError(RuntimeError):
    """A numerical stage failed: domain violation, non-finite value, or a
    linear solver that did not reach its tolerance."""
