"""Exception hierarchy shared by all mefem modules."""


class MefemError(Exception):
    """Base class for all library errors."""


class MeshParseError(MefemError, ValueError):
    """Malformed mesh text. Carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshValidationError(MefemError, ValueError):
    """A mesh violates one of its structural invariants."""


class SingularElementError(MefemError, ArithmeticError):
    """Degenerate tetrahedron or zero-area facet."""

    def __init__(self, message: str, element: int | None = None):
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)
        self.element = element


class UnsupportedMaterialError(MefemError, ValueError):
    """A closed-form constant was requested for a material it does not cover."""


class SingularSystemError(MefemError, ArithmeticError):
    """Factorization of a system or block failed."""


class NoConvergenceError(MefemError, RuntimeError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class SizeLimitError(MefemError, ValueError):
    """Dense eigen-analysis requested beyond the desk-scale cap."""


class AssumptionViolationError(MefemError, ValueError):
    """The inputs violate a precondition of an estimator (e.g. empty Dirichlet set)."""


class ConfigError(MefemError, ValueError):
    """Unreadable or inconsistent run configuration."""
