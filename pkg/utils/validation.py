"""
Input validation for numerical operands.

Every check raises a typed LabError so services can propagate failures to the
command line with an exit code and payload.
"""

from typing import Iterable, Optional

import numpy as np

from utils.config import get_settings
from utils.errors import (
    DensityMatrixError,
    DimensionLimitError,
    DimensionMismatchError,
    HermiticityError,
    ParameterError,
)

settings = get_settings()


def hermiticity_residual(matrix: np.ndarray) -> float:
    """Max elementwise |M - M^dagger|"""
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def require_square(matrix: np.ndarray, label: str, module: Optional[str] = None) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(
            f"{label} must be a square matrix, got shape {matrix.shape}",
            module=module,
            label=label,
            shape=list(matrix.shape),
        )


def require_hermitian(
    matrix: np.ndarray,
    label: str,
    tolerance: Optional[float] = None,
    module: Optional[str] = None,
) -> None:
    """Reject operators whose anti-Hermitian part exceeds the tolerance.

    The default tolerance scales the configured absolute bound by the matrix
    magnitude, so large Hamiltonians built in floating point are accepted.
    """
    require_square(matrix, label, module)
    require_finite(matrix, label, module)
    if tolerance is None:
        scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)
        tolerance = settings.HERMITICITY_TOLERANCE * scale * 100
    residual = hermiticity_residual(matrix)
    if residual > tolerance:
        raise HermiticityError(
            f"{label} is not Hermitian (max |M - M^dagger| = {residual:.3e})",
            module=module,
            label=label,
            residual=residual,
            tolerance=tolerance,
        )


def require_finite(values, label: str, module: Optional[str] = None) -> None:
    array = np.asarray(values)
    if not np.all(np.isfinite(array)):
        raise ParameterError(f"{label} contains non-finite values", module=module, label=label)


def require_dimension(dimension: int, label: str, module: Optional[str] = None, cap: Optional[int] = None) -> None:
    cap = cap or settings.MAX_DIMENSION
    if dimension > cap:
        raise DimensionLimitError(
            f"{label} dimension {dimension} exceeds the configured cap {cap}",
            module=module,
            dimension=dimension,
            cap=cap,
        )


def require_matching(dimensions: Iterable[int], label: str, module: Optional[str] = None) -> None:
    unique = sorted(set(int(d) for d in dimensions))
    if len(unique) > 1:
        raise DimensionMismatchError(
            f"{label}: operand dimensions disagree {unique}",
            module=module,
            dimensions=unique,
        )


def require_density_matrix(rho: np.ndarray, label: str = "rho0", module: Optional[str] = None, tolerance: float = 1e-10) -> None:
    """Hermitian, unit trace, positive semidefinite"""
    require_square(rho, label, module)
    require_finite(rho, label, module)
    residual = hermiticity_residual(rho)
    trace = complex(np.trace(rho))
    if residual > tolerance:
        raise DensityMatrixError(f"{label} is not Hermitian", module=module, residual=residual)
    if abs(trace - 1.0) > tolerance:
        raise DensityMatrixError(f"{label} trace is {trace.real:.6g}, expected 1", module=module, trace=trace.real)
    minimum = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if minimum < -tolerance:
        raise DensityMatrixError(f"{label} has negative eigenvalue {minimum:.3e}", module=module, min_eigenvalue=minimum)
