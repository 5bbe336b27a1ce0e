"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ValidationError (and its file-format
subclasses) -> 2, NumericalError -> 3, usage problems -> 1.
"""


class WaveromError(Exception):
    pass


class ValidationError(WaveromError):
    """A config, argument, or data file violates its contract."""


class FormatError(ValidationError):
    """Base for binary file-format problems."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class SpecMismatchError(FormatError):
    """Checkpoint architecture does not match what was requested/stored."""


class NumericalError(WaveromError):
    """Non-finite values or divergence during computation."""


class InstabilityError(NumericalError):
    """FDTD update produced NaN/Inf; message names the offending step."""
