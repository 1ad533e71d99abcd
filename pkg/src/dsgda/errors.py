"""Exception types raised across the package."""


class DSGDAError(Exception):
    """Base class for all package errors."""


class ConnectivityFailure(DSGDAError):
    pass


class SpectralFailure(DSGDAError):
    pass


class IndexOutOfRange(DSGDAError, IndexError):
    pass


class DegenerateClassBalance(DSGDAError):
    pass


class SingularSystem(DSGDAError):
    pass


class NoOracle(DSGDAError):
    """The problem has no closed-form best response."""


class BatchTooLarge(DSGDAError, ValueError):
    pass


class ScheduleMismatch(DSGDAError, ValueError):
    pass


class DimensionMismatch(DSGDAError, ValueError):
    pass


class NonFiniteIterate(DSGDAError):
    def __init__(self, round_index: int, message: str = ""):
        self.round_index = round_index
        super().__init__(message or f"non-finite iterate at round {round_index}")


class ParseError(DSGDAError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class LabelError(ParseError):
    pass


class EmptyWorker(DSGDAError):
    pass


class DegenerateLabels(DSGDAError, ValueError):
    pass


class ConfigError(DSGDAError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class SchemaError(DSGDAError):
    pass
