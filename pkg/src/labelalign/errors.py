"""Exception hierarchy shared by the library and the CLI (which maps them to exit codes)."""


class LabelAlignError(Exception):
    """Base class for all errors raised by this package."""


class DataError(LabelAlignError):
    """Malformed or missing input data."""


class NumericalError(LabelAlignError):
    """A computation could not be carried out (singular system, divergence, ...)."""


class VerificationError(LabelAlignError):
    """A checked inequality or invariant was violated."""
