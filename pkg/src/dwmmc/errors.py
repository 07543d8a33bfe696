"""Exception types raised across the package."""


class DwmmcError(Exception):
    """Base class for all package errors."""


class ConfigError(DwmmcError, ValueError):
    """Bad or unparseable configuration."""


class NumericalError(DwmmcError, ArithmeticError):
    """A numerical failure (non-finite state, unstable integration)."""


class NonFiniteState(NumericalError):
    def __init__(self, message, trial=None):
        super().__init__(message if trial is None else f"{message} (trial {trial})")
        self.trial = trial


class InsufficientTrials(DwmmcError, ValueError):
    pass


class NonMonotoneCalibration(DwmmcError, ValueError):
    pass


class ShapeMismatch(DwmmcError, ValueError):
    pass


class NoForwardState(DwmmcError, RuntimeError):
    pass


class StoreFull(DwmmcError):
    pass


class EmptyStore(DwmmcError, RuntimeError):
    pass


class BadMagic(DwmmcError, ValueError):
    pass


class DimMismatch(DwmmcError, ValueError):
    pass


class TruncatedFile(DwmmcError, ValueError):
    pass


class ZeroStd(DwmmcError, ValueError):
    pass
