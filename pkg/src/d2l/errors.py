"""Exception hierarchy shared across the package.

``D2LError`` is the common base; ``ConfigError`` subclasses map to CLI
exit code 2 (bad usage/config), everything else to exit code 3
(runtime abort).
"""


class D2LError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(D2LError):
    """Invalid user-supplied configuration or arguments."""


class InsufficientPoints(ConfigError):
    """Fewer usable reference points than the requested neighborhood size."""


class NonFiniteInput(D2LError):
    """An input coordinate is NaN or infinite."""


class AllDegenerate(D2LError):
    """No point in the batch produced a valid LID estimate."""


class ShapeMismatch(D2LError):
    """Array shapes do not compose."""


class NonFiniteLoss(D2LError):
    """Training loss became NaN or infinite."""


class IncompatibleArchitecture(D2LError):
    """Checkpoint layer shapes do not match the target model."""


class BadMagic(D2LError):
    """File does not start with the expected magic number."""


class TruncatedFile(D2LError):
    """File ended before the declared payload was read."""


class CountMismatch(D2LError):
    """Image and label files declare different sample counts."""


class InvalidRate(ConfigError):
    """Noise rate outside [0, 1)."""


class InvalidDims(ConfigError):
    """Intrinsic dimension exceeds ambient dimension."""


class SingularMatrix(D2LError):
    """Transition matrix is not invertible."""


class EmptyHistory(D2LError):
    """LID trajectory has no prior entries to compare against."""
