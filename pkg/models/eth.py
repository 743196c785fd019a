from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from models.correlation import EigenSystem


class DecayCheck(Enum):
    PASS = "PASS"
    FAIL = "FAIL"


class EthSpec(BaseModel):
    """Synthetic environment obeying the ETH matrix-element ansatz"""

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        json_schema_extra={
            "example": {
                "dim": 400,
                "energy_width": 5.0,
                "envelope_width": 1.0,
                "diagonal_value": 0.0,
                "noise": "real",
                "spectrum": "random",
                "seed": 1,
            }
        },
    )

    dim: int = Field(default=200, ge=16, description="Hilbert-space dimension")
    energy_width: float = Field(default=5.0, gt=0.0, description="width sigma_E of the level density")
    band: Optional[float] = Field(default=None, gt=0.0, description="half-width of the energy band; None means 3 sigma_E")
    envelope_width: float = Field(default=1.0, gt=0.0, description="width w_f of the Gaussian f_0 in omega")
    diagonal_value: float = Field(default=0.0, description="smooth diagonal B(E), constant")
    noise_amplitude: float = Field(default=1.0, ge=0.0)
    noise: Literal["real", "complex"] = "real"
    spectrum: Literal["random", "quantile"] = "random"
    typical_diagonal: bool = Field(default=False, description="force every B^kk to the smooth value")
    beta: float = Field(default=0.0, ge=0.0)
    seed: int = 0

    @property
    def band_half_width(self) -> float:
        return self.band if self.band is not None else 3.0 * self.energy_width


@dataclass(eq=False)
class EthEnvironment:
    """Sampled spectrum and ansatz coupling, ready for the eigenbasis correlation"""

    spec: EthSpec
    eigensystem: EigenSystem
    # S at every level energy
    entropy: np.ndarray

    @property
    def dimension(self) -> int:
        return self.eigensystem.dimension

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.model_dump(),
            "dimension": self.dimension,
            "spectral_range": self.eigensystem.spectral_range,
            "max_entropy": float(np.max(self.entropy)),
        }


@dataclass
class PolynomialDecayReport:
    """Smallest C_N with |C(t)| <= C_N (1+t)^-N on the grid"""

    n_order: int
    bound_constant: float
    tail_ratio: float
    saturation_time: float
    status: DecayCheck

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_order": self.n_order,
            "C_N": self.bound_constant,
            "tail_ratio": self.tail_ratio,
            "saturation_time": self.saturation_time,
            "status": self.status.value,
        }


@dataclass(eq=False)
class OffsetStudy:
    """Offsets C_0 over (dimension, seed) with per-dimension summaries"""

    dims: List[int]
    seeds: List[int]
    offsets: np.ndarray

    def medians(self) -> Dict[int, float]:
        return {dim: float(np.median(row)) for dim, row in zip(self.dims, self.offsets)}

    def means(self) -> Dict[int, float]:
        return {dim: float(np.mean(row)) for dim, row in zip(self.dims, self.offsets)}

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"dim": dim, "seed": seed, "C0": float(self.offsets[i, j])}
            for i, dim in enumerate(self.dims)
            for j, seed in enumerate(self.seeds)
        ]
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dims": self.dims,
            "seeds": self.seeds,
            "median_C0": {str(k): v for k, v in self.medians().items()},
            "mean_C0": {str(k): v for k, v in self.means().items()},
        }
