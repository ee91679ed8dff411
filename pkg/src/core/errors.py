"""
Error kinds raised by the numerical modules.

Validation problems subclass ValueError and numerical breakdowns subclass
RuntimeError, so callers that only know the builtin families keep working.
"""
from typing import Any, Dict, Optional


class ValidationError(ValueError):
    """A precondition or parameter of an operation was violated."""

    def __init__(self, module: str, operation: str, parameter: str, message: str):
        self.module = module
        self.operation = operation
        self.parameter = parameter
        super().__init__(f"[{module}.{operation}] {parameter}: {message}")


class SingularEvaluationError(ValidationError):
    """Kernel evaluated at coincident (or numerically coincident) points."""


class EmptyClusterError(ValidationError):
    """No cell of the lattice survived the clearance rule."""


class UnsupportedVariantError(ValidationError):
    """The requested variant exists only as a parameter skeleton."""


class ConfigurationError(ValueError):
    """The configuration document could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class NumericalError(RuntimeError):
    """A dense solve or eigensolve failed or was too close to singular."""

    def __init__(self, module: str, operation: str, message: str,
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.module = module
        self.operation = operation
        self.diagnostics = dict(diagnostics or {})
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        suffix = f" [{details}]" if details else ""
        super().__init__(f"[{module}.{operation}] {message}{suffix}")


class ExperimentError(RuntimeError):
    """Wraps a module failure raised while an experiment was running."""

    def __init__(self, experiment: str, cause: Exception):
        self.experiment = experiment
        self.cause = cause
        super().__init__(f"Experiment '{experiment}' failed: {cause}")

    @property
    def exit_code(self) -> int:
        if isinstance(self.cause, (ValidationError, ConfigurationError)):
            return 2
        return 3
