"""Exception hierarchy shared across the package."""


class HisegError(Exception):
    """Base class for all package-specific errors."""


class DosError(HisegError, ValueError):
    """Base class for degree-of-sharing classification errors."""


class DosSyntaxError(DosError):
    """A classification string contains a letter the grammar does not know."""


class ArityError(DosError):
    """Part or letter counts are inconsistent with the level count."""


class FlagError(DosError):
    """The sequential flag appears where the grammar forbids it."""


class FormatError(HisegError):
    """A file record does not match the expected serialization."""


class RangeError(HisegError):
    """An id, index, or count is outside its admissible range."""


class ShapeError(HisegError):
    """A latent state or segmentation does not match the corpus shape."""


class ConfigError(HisegError):
    """A configuration mixes fields or values that do not belong together."""


class InfeasibleError(HisegError):
    """A requested structure cannot exist (for example, more segments than sentences)."""


class UnsupportedError(HisegError):
    """A valid classification has no executable generative configuration."""


class ExhaustionError(HisegError):
    """No topic can be sampled: all candidates are masked and new topics are disallowed."""
