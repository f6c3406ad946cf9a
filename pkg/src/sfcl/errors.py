"""Exception hierarchy shared by every module.

The CLI maps these onto its exit-code contract: UsageError -> 1,
InputError -> 2, NumericError -> 3.
"""


class SfclError(Exception):
    """Base class for all library errors."""


class UsageError(SfclError):
    """The caller violated an API contract (bad arguments, wrong order of calls)."""


class ShapeError(UsageError):
    """Operands have incompatible dimensions; the message names both shapes."""


class ConfigError(UsageError):
    """A configuration object violates one of its invariants."""


class InputError(SfclError):
    """External data (image, manifest, model file) is malformed or unusable."""


class FormatError(InputError):
    """A serialized artifact has a bad magic number, version, or structure."""


class NumericError(SfclError):
    """A computation produced or received non-finite values."""
