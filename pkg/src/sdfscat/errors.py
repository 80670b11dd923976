"""Exception hierarchy shared by all sdfscat modules."""


class SdfScatError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SdfScatError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Evaluation requested exactly at a kernel singularity."""


class NumericError(SdfScatError, ArithmeticError):
    """A numeric operation produced or encountered a non-finite value."""


class SolverError(NumericError):
    """The dense linear solver failed (singular or near-singular matrix)."""


class FormatError(SdfScatError, ValueError):
    """A file did not conform to one of the package's text formats."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GeometryError(SdfScatError, ValueError):
    """Invalid sensor/arc geometry."""


class DegenerateInputError(SdfScatError, ValueError):
    """Input is structurally degenerate (e.g. a mask with no interface)."""


class EmptyTubeError(SdfScatError, RuntimeError):
    """No grid point fell inside the tubular neighborhood."""


class TrainingError(SdfScatError, RuntimeError):
    """An optimization loop diverged or hit a non-finite loss."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class ConfigError(SdfScatError, ValueError):
    """Invalid or inconsistent run configuration."""


class AssemblyError(NumericError):
    """A non-finite entry appeared while assembling the boundary system."""
