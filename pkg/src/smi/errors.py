"""Exception hierarchy shared across the package.

Every failure the CLI maps to an exit code derives from SmiError; the
`exit_code` attribute groups them into config / IO / numeric / protocol
classes.
"""


class SmiError(Exception):
    exit_code = 1


class ConfigInvalid(SmiError):
    exit_code = 2


class OutOfRange(ConfigInvalid):
    """A sensor value left [0, 1] or is non-finite."""


class DimensionMismatch(ConfigInvalid):
    """Array shape disagrees with the 43-cell, 7-channel frame layout."""


class AllMasked(ConfigInvalid):
    """Modality mask would remove every input channel."""


class TooSmall(ConfigInvalid):
    """Dataset too small for the requested split."""


class IoFailure(SmiError):
    exit_code = 3


class NumericFailure(SmiError):
    exit_code = 4


class BudgetViolation(NumericFailure):
    """Parameter count outside the configured budget window."""


class NonFinite(NumericFailure):
    """An activation, loss, or gradient overflowed."""


class ProtocolFailure(SmiError):
    exit_code = 5


class StaleModel(ProtocolFailure):
    """Checkpoint manifest version does not match this build."""


class ProtocolViolation(ProtocolFailure):
    """Malformed message on a live session."""


class BindFailure(ProtocolFailure):
    """Could not bind the serve socket."""
