# engine/errors.py
"""
Simulation error types and user-facing error reporting.

Every failure raised by the engine carries a category, a severity and the
process exit code the CLI should use, and can be flattened into a
machine-readable record.
"""

import json
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from rich.console import Console
from rich.panel import Panel
from rich.table import Table


class ErrorSeverity(Enum):
    """Error severity levels"""
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """Simulation error categories"""
    CONFIG = "config"
    VALIDATION = "validation"
    SOLVER = "solver"
    QUADRATURE = "quadrature"
    IO = "io"


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


class SimulationError(Exception):
    """Base class for every error the simulator reports."""

    category: ErrorCategory = ErrorCategory.SOLVER
    severity: ErrorSeverity = ErrorSeverity.ERROR
    exit_code: int = EXIT_SOLVER

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_record(self) -> Dict[str, Any]:
        """Flatten into a JSON-serialisable record."""
        record = {
            "error": type(self).__name__,
            "category": self.category.value,
            "severity": self.severity.value,
            "exit_code": self.exit_code,
            "message": self.message,
        }
        record.update({key: _jsonable(value) for key, value in self.details.items()})
        return record


class ParameterError(SimulationError):
    """A physical parameter violates its invariant."""

    category = ErrorCategory.VALIDATION
    exit_code = EXIT_CONFIG

    def __init__(self, field_name: str, message: str, value: Any = None):
        super().__init__(f"{field_name}: {message}", field=field_name, value=value)
        self.field_name = field_name
        self.value = value


class ConfigError(SimulationError):
    """Malformed or inconsistent configuration document."""

    category = ErrorCategory.CONFIG
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, line: Optional[int] = None,
                 expected_dimension: Optional[str] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message, line=line,
                         expected_dimension=expected_dimension)
        self.line = line
        self.expected_dimension = expected_dimension


class SolverError(SimulationError):
    """Numerical solver failure."""


class IntegrationError(SolverError):
    """Time integration stopped before reaching the requested horizon."""

    def __init__(self, message: str, time_of_failure: float):
        super().__init__(message, time_of_failure=time_of_failure)
        self.time_of_failure = time_of_failure


class DegenerateParametersError(SolverError):
    """The constrained steady-state system is singular or ill-conditioned."""

    def __init__(self, message: str, condition_estimate: float):
        super().__init__(message, condition_estimate=condition_estimate)
        self.condition_estimate = condition_estimate


class QuadratureError(SolverError):
    """Velocity quadrature could not be evaluated."""

    category = ErrorCategory.QUADRATURE


class SpectrumGridError(SolverError):
    """One or more detuning grid points failed."""

    def __init__(self, failures: List[Tuple[int, str]]):
        indices = ", ".join(str(index) for index, _ in failures)
        super().__init__(f"{len(failures)} grid point(s) failed at indices [{indices}]",
                         failures=[{"index": i, "message": m} for i, m in failures])
        self.failures = failures


class ResultFileError(SimulationError):
    """Missing or unreadable result file."""

    category = ErrorCategory.IO
    exit_code = EXIT_CONFIG


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and value != value:
        return None
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


SUGGESTIONS = {
    ErrorCategory.CONFIG: "Check the section headers, key names and unit suffixes (see docs/CONFIG.md).",
    ErrorCategory.VALIDATION: "Rates and Rabi frequencies must be finite and >= 0; wavelengths > 0.",
    ErrorCategory.SOLVER: "Check for parameter sets with no unique stationary state (e.g. all rates zero).",
    ErrorCategory.QUADRATURE: "Increase quadrature_nodes or narrow the detuning range.",
    ErrorCategory.IO: "Check that the result file exists and was written by owi-sim.",
}


@dataclass
class ErrorReporter:
    """
    Renders simulation errors for people (rich panel on stderr) and for
    scripts (one JSON line on stdout).
    """
    console: Console = field(default_factory=lambda: Console(stderr=True))
    error_count: int = 0
    warning_count: int = 0

    def render(self, error: SimulationError) -> None:
        color = "red" if error.severity in (ErrorSeverity.ERROR, ErrorSeverity.CRITICAL) else "yellow"
        body = f"[bold]{error.message}[/bold]\n\n💡 {SUGGESTIONS.get(error.category, '')}"
        self.console.print(Panel(
            body,
            title=f"{error.category.value.title()} {error.severity.value.title()}",
            title_align="center",
            border_style=color,
            padding=(1, 2),
        ))
        if color == "red":
            self.error_count += 1
        else:
            self.warning_count += 1

    def emit_record(self, error: SimulationError, stream=None) -> str:
        line = json.dumps(error.to_record(), sort_keys=True)
        print(line, file=stream or sys.stdout)
        return line

    def warn(self, message: str) -> None:
        self.console.print(f"⚠️  [yellow]{message}[/yellow]")
        self.warning_count += 1

    def show_summary(self) -> None:
        if self.error_count == 0 and self.warning_count == 0:
            return
        table = Table(title="Run Issues Summary", show_header=True)
        table.add_column("Type", style="cyan")
        table.add_column("Count", style="yellow")
        if self.error_count:
            table.add_row("Errors", str(self.error_count))
        if self.warning_count:
            table.add_row("Warnings", str(self.warning_count))
        self.console.print(table)
