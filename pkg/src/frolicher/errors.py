"""Exception hierarchy shared by all modules."""


class FrolicherError(Exception):
    """Base class for every error raised by this package."""


class StructureError(FrolicherError):
    """A bicomplex or model has inconsistent shapes or bidegrees."""


class DomainError(FrolicherError, ValueError):
    """An argument lies outside the range where an operation is defined."""


class IntegrabilityError(FrolicherError):
    """Structure equations do not define an integrable complex structure."""


class ParseError(FrolicherError):
    """Malformed model file; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, column {column}: {message}")


class CapabilityError(FrolicherError):
    """The operation needs data the input does not carry (e.g. a conjugation)."""


class PreconditionError(FrolicherError):
    """An input fails a mathematical precondition; `residual` records by how much."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")


class NumericalError(FrolicherError):
    """Two computations that must agree did not, or an iteration failed to converge."""


class NoRootError(NumericalError):
    """The (n-1)-st root iteration did not converge; `trace` holds the residual history."""

    def __init__(self, message: str, trace: list[float]):
        self.trace = trace
        super().__init__(f"{message} (last residual {trace[-1]:.3e})" if trace else message)
