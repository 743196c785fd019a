"""
Error hierarchy shared by every service and the command line.

Each error carries the process exit code the CLI reports and a JSON-able payload
describing the failure.
"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for failures raised by the laboratory services"""

    exit_code = 3

    def __init__(self, message: str, module: Optional[str] = None, **payload: Any):
        super().__init__(message)
        self.message = message
        self.module = module
        self.payload = payload

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "module": self.module,
            "exit_code": self.exit_code,
            "details": {key: jsonable(value) for key, value in self.payload.items()},
        }


class ConfigurationError(LabError):
    """Malformed, unknown or invalid configuration entries"""

    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None, **payload: Any):
        super().__init__(message, module="config", key=key, line=line, **payload)
        self.key = key
        self.line = line


class ParameterError(LabError):
    """Physical input outside the domain of an operation"""

    exit_code = 2


class NumericalError(LabError):
    """Numerical failure inside a computation"""


class HermiticityError(NumericalError):
    """Operator expected to be Hermitian is not"""


class DimensionLimitError(NumericalError):
    """Hilbert-space dimension exceeds the configured cap"""


class DimensionMismatchError(NumericalError):
    """Operands built for different tensor structures"""


class EigensolverError(NumericalError):
    """Dense eigensolver did not converge"""


class StepSizeError(NumericalError):
    """Integration step does not resolve the fastest Bohr frequency"""


class DensityMatrixError(NumericalError):
    """Initial state is not a valid density matrix"""


def jsonable(value: Any) -> Any:
    """Convert payload values (numpy scalars and arrays included) to JSON types; non-finite floats become strings"""
    if hasattr(value, "tolist") and not isinstance(value, (str, bytes)):
        value = value.tolist()
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    if isinstance(value, float):
        return value if value == value and abs(value) != float("inf") else str(value)
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)
