"""Exception types shared across the package."""


class FedwindError(Exception):
    """Base class for all package errors."""


class ShapeError(FedwindError, ValueError):
    """Array or network shape does not match what the operation needs."""


class StateError(FedwindError, RuntimeError):
    """Operation invoked against stale or mismatched internal state."""


class NumericError(FedwindError, ArithmeticError):
    """Non-finite values showed up where finite numbers are required."""


class ProtocolError(FedwindError, ValueError):
    """Parameter-exchange contract violated (empty or incompatible payloads)."""


class FormatError(FedwindError, ValueError):
    """Serialized parameter payload is truncated or corrupt."""


class RangeError(FedwindError, ValueError):
    """Index or window falls outside the usable part of a series."""


class DomainError(FedwindError, ValueError):
    """Value outside its permitted domain (e.g. an action outside [0, 1])."""


class DataError(FedwindError, ValueError):
    """Time-series ingestion or preparation failed."""


class ManifestError(FedwindError, ValueError):
    """Run manifest is malformed or internally inconsistent."""


class ArimaFitError(FedwindError, RuntimeError):
    """ARIMA estimation did not converge within its iteration budget.

    The best parameter set found so far is attached as ``model``.
    """

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model
