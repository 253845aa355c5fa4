"""Exception hierarchy shared across the package.

The CLI maps these families onto exit codes, so every module raises one of
the classes below rather than bare ``ValueError`` when a failure is part of
a documented contract.
"""


class AsymMDIError(Exception):
    """Base class for all package errors."""


class ConfigError(AsymMDIError):
    """Malformed, missing or inconsistent configuration."""


class NumericError(AsymMDIError):
    """A numerical stage failed (root finding, SVD, normalization...)."""


class GridError(NumericError):
    """A frequency grid is too narrow or grids do not match."""


class DegenerateSpectrumError(NumericError):
    """A spectral amplitude lost (almost) all of its norm."""


class TruncationError(NumericError):
    """A photon-number distribution carries more tail mass than allowed."""


class ConsistencyError(NumericError):
    """An internal identity (e.g. non-negative probability) was violated."""


class LPError(AsymMDIError):
    """Base class for linear-programming failures."""


class LPInfeasibleError(LPError):
    """The constraint set admits no solution."""


class LPUnboundedError(LPError):
    """The objective is unbounded on the feasible set."""
