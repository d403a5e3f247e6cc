"""Exception types that map onto the CLI exit-code contract.

Input-shaped problems (bad files, bad parameters, wrong shapes) are
ValueError subclasses and exit with code 2; numeric failures during
training or inference exit with code 1.
"""


class NumericError(RuntimeError):
    """Non-finite loss or gradient encountered while optimizing."""


class DataFormatError(ValueError):
    """Malformed dataset file; the message names the offending row."""


class ArchiveError(ValueError):
    """Unreadable, truncated, or version-incompatible model archive."""


class VariantError(ValueError):
    """Operation invoked on the wrong head variant (bayesian vs baseline)."""
