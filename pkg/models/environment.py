from dataclasses import dataclass, field
from typing import Any, Dict, Optional
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.validation import hermiticity_residual


class MoleculeParams(BaseModel):
    """Physical knobs of one environment molecule"""

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        json_schema_extra={
            "example": {
                "epsilon": 1.0,
                "delta": 1.0,
                "r": 0.25,
                "omega_c": 1.0,
                "n_modes": 1,
                "n_max": 8,
                "beta": 1.0,
            }
        },
    )

    epsilon: float = Field(default=1.0, description="flip-flop energy")
    delta: float = Field(default=1.0, description="spin-tunneling strength")
    r: float = Field(default=0.0, ge=0.0, le=1.0, description="dimensionless spin-boson interaction strength")
    omega_c: float = Field(default=1.0, gt=0.0, description="cutoff scale; hard cutoff at 2*omega_c")
    n_modes: int = Field(default=0, ge=0, description="number of vibrational modes L")
    n_max: Optional[int] = Field(default=None, ge=1, description="Fock truncation per mode; None selects the tail rule")
    beta: float = Field(default=1.0, ge=0.0, description="inverse temperature")

    @field_validator("epsilon", "delta", "r", "omega_c", "beta")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @property
    def rabi_frequency(self) -> float:
        return math.hypot(self.delta, self.epsilon)

    def to_dict(self) -> Dict[str, Any]:
        data = self.model_dump()
        data["rabi_frequency"] = self.rabi_frequency
        return data


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Discrete bath modes (omega_lambda, g_lambda)"""

    frequencies: np.ndarray
    couplings: np.ndarray
    omega_c: Optional[float] = None

    def __post_init__(self):
        frequencies = np.asarray(self.frequencies, dtype=float).reshape(-1)
        couplings = np.asarray(self.couplings, dtype=float).reshape(-1)
        if frequencies.shape != couplings.shape:
            raise ValueError("frequencies and couplings must have the same length")
        if frequencies.size and np.any(frequencies <= 0):
            raise ValueError("mode frequencies must be positive")
        if frequencies.size > 1 and np.any(np.diff(frequencies) <= 0):
            raise ValueError("mode frequencies must be strictly increasing")
        if self.omega_c is not None and frequencies.size and frequencies[-1] > 2 * self.omega_c * (1 + 1e-12):
            raise ValueError("mode frequencies must not exceed 2*omega_c")
        if np.any(couplings < 0) or not np.all(np.isfinite(couplings)):
            raise ValueError("couplings must be finite and nonnegative")
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "couplings", couplings)

    def __len__(self) -> int:
        return int(self.frequencies.size)

    @property
    def total_coupling(self) -> float:
        """Sum of g_lambda^2"""
        return float(np.sum(self.couplings ** 2))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frequencies": self.frequencies.tolist(),
            "couplings": self.couplings.tolist(),
            "omega_c": self.omega_c,
            "total_coupling": self.total_coupling,
        }

    def __repr__(self):
        return f"<ModeSet(L={len(self)}, sum_g2={self.total_coupling:.6g})>"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense square operator with a label and its tensor structure"""

    matrix: np.ndarray
    label: str
    # local dimensions, electronic factor first
    structure: tuple = field(default_factory=tuple)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"{self.label} must be square, got {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)
        if not self.structure:
            object.__setattr__(self, "structure", (matrix.shape[0],))

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def hermiticity_residual(self) -> float:
        return hermiticity_residual(self.matrix)

    def is_hermitian(self, tolerance: float = 1e-12) -> bool:
        return self.hermiticity_residual < tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "dimension": self.dimension,
            "structure": list(self.structure),
            "hermiticity_residual": self.hermiticity_residual,
        }

    def __repr__(self):
        return f"<OperatorMatrix(label='{self.label}', dimension={self.dimension})>"
