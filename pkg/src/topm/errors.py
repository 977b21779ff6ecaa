"""Exception types shared across the package."""


class TopmError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(TopmError, ValueError):
    """A vector or matrix argument has the wrong shape."""


class InstanceFormatError(TopmError, ValueError):
    """An instance file or instance construction violates the format contract."""


class InfeasibleDesign(TopmError, RuntimeError):
    """The L1 design system has no solution (target outside the column span)."""


class BoundOverflow(TopmError, OverflowError):
    """The fixed-point sample-complexity bound exceeds the search cap (2**63)."""


class ConfigError(TopmError, ValueError):
    """Invalid algorithm, threshold, or campaign configuration."""
