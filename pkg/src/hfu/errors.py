"""Exception and warning types raised by hfu."""


class HfuError(Exception):
    """Base class for all hfu errors."""


class ConfigError(HfuError):
    """Invalid user configuration (CLI exit code 2)."""


# simulation / ingestion
class VolVanished(HfuError):
    pass


class NonFinite(HfuError):
    pass


class AlphaUnavailable(HfuError):
    pass


class IrregularGrid(ConfigError):
    pass


class TooShort(ConfigError):
    pass


# kernels
class UnknownKernel(ConfigError):
    pass


class BadParam(ConfigError, ValueError):
    pass


class KernelContractError(HfuError):
    """A kernel failed its randomized symmetry or evenness self-test."""


class NotEven(HfuError):
    pass


# evaluation
class WindowTooShort(HfuError):
    pass


class EnumerationGuard(HfuError):
    """Full tuple enumeration refused because the sample is too large."""


class QuadratureBudget(HfuError):
    pass


class NonConvergent(HfuError):
    pass


class DegenerateDenominator(HfuError):
    pass


# Monte Carlo
class BudgetExceeded(HfuError):
    pass


class TooFewSamples(HfuError):
    pass


class FlooredVariance(UserWarning):
    """The variance estimate V1 - V2 was below its floor and was clamped."""
