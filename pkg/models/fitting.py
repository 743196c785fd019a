from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class FitStatus(Enum):
    CONVERGED = "CONVERGED"
    NON_CONVERGED = "NON_CONVERGED"


class DecayModelParams(BaseModel):
    """f(t) = A0 cos(w0 t) exp(-B0 t^a) + C~0 exp(-t/T0)"""

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        json_schema_extra={
            "example": {
                "A0": 0.5,
                "omega0": 2.7,
                "B0": 0.3,
                "a": 1.41421,
                "C0_tilde": 0.31,
                "T0": 50.0,
            }
        },
    )

    A0: float = 0.0
    omega0: float = 0.0
    B0: float = Field(default=0.0, ge=0.0)
    a: float = Field(default=1.0, gt=0.0)
    C0_tilde: float = 0.0
    # None is the pure offset, T0 = infinity
    T0: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("A0", "omega0", "B0", "a", "C0_tilde")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @field_validator("T0")
    @classmethod
    def _finite_or_infinite(cls, value: Optional[float]) -> Optional[float]:
        if value is None or math.isinf(value):
            return None
        if not math.isfinite(value):
            raise ValueError("must be finite or infinite")
        return value

    @property
    def relaxation_rate(self) -> float:
        return 0.0 if self.T0 is None else 1.0 / self.T0


class WeakCouplingModelParams(BaseModel):
    """f(t) = A~0 exp(-kappa t) cos(Omega0 t) + C0 exp(-lambda t) + const"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    amplitude: float = 0.0
    damping: float = Field(default=0.0, ge=0.0, description="Re lambda_0")
    frequency: float = Field(default=0.0, description="Im lambda_0")
    offset: float = 0.0
    offset_rate: float = Field(default=0.0, ge=0.0, description="lambda")
    const: float = 0.0

    @field_validator("amplitude", "damping", "frequency", "offset", "offset_rate", "const")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


@dataclass
class FitResult:
    """Decay-model fit of Re C_B(t)"""

    parameters: DecayModelParams
    residual_rms: float
    status: FitStatus
    iterations: int
    infinite_T0: bool = False
    covariance: Optional[np.ndarray] = None
    starts: int = 1
    parameter_names: List[str] = field(
        default_factory=lambda: ["A0", "omega0", "B0", "a", "C0_tilde", "T0"]
    )

    @property
    def T0(self) -> float:
        return math.inf if self.parameters.T0 is None else self.parameters.T0

    @property
    def relaxation_rate(self) -> float:
        return self.parameters.relaxation_rate

    def standard_errors(self) -> Dict[str, Optional[float]]:
        if self.covariance is None:
            return {name: None for name in self.parameter_names}
        variances = np.diag(self.covariance)
        return {
            name: (float(np.sqrt(v)) if np.isfinite(v) and v >= 0 else None)
            for name, v in zip(self.parameter_names, variances)
        }

    def to_dict(self) -> Dict[str, Any]:
        params = self.parameters.model_dump()
        params["T0"] = "INFINITE" if self.infinite_T0 or params["T0"] is None else params["T0"]
        return {
            "parameters": params,
            "standard_errors": self.standard_errors(),
            "residual_rms": self.residual_rms,
            "status": self.status.value,
            "T0_flag": "INFINITE" if self.infinite_T0 else "FINITE",
            "iterations": self.iterations,
            "starts": self.starts,
        }

    def __repr__(self):
        return f"<FitResult(status={self.status.value}, rms={self.residual_rms:.3e})>"


@dataclass
class WeakCouplingFit:
    """Fit of the weak-coupling functional form"""

    parameters: WeakCouplingModelParams
    residual_rms: float
    status: FitStatus
    iterations: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "parameters": self.parameters.model_dump(),
            "residual_rms": self.residual_rms,
            "status": self.status.value,
            "iterations": self.iterations,
        }
