from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from models.correlation import CorrelationSeries


class EnsembleSpec(BaseModel):
    """Gaussian ensemble of non-interacting molecules"""

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        json_schema_extra={
            "example": {
                "n_molecules": 50,
                "mean_delta": 1.0,
                "mean_epsilon": 1.0,
                "sigma": 0.3,
                "r": 0.25,
                "n_modes": 1,
                "beta": 1.0,
                "seed": 7,
            }
        },
    )

    n_molecules: int = Field(default=50, ge=1, description="molecule count M")
    mean_delta: float = Field(default=1.0, gt=0.0)
    mean_epsilon: float = Field(default=1.0, gt=0.0)
    sigma: float = Field(default=0.3, ge=0.0, description="common width of the Delta and epsilon distributions")
    r: float = Field(default=0.25, ge=0.0, le=1.0)
    omega_c: float = Field(default=1.0, gt=0.0)
    n_modes: int = Field(default=1, ge=0)
    n_max: Optional[int] = Field(default=None, ge=1)
    beta: float = Field(default=1.0, ge=0.0)
    seed: int = 0


@dataclass(eq=False)
class EnsembleCorrelation:
    """(1/M) sum_j C_B^(j)(t) with the per-molecule offsets"""

    series: CorrelationSeries
    molecule_offsets: np.ndarray

    @property
    def n_molecules(self) -> int:
        return int(self.molecule_offsets.size)

    @property
    def aggregate_offset(self) -> float:
        return float(np.mean(self.molecule_offsets))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_molecules": self.n_molecules,
            "aggregate_offset": self.aggregate_offset,
            "molecule_offsets": self.molecule_offsets.tolist(),
            "series": self.series.to_dict(),
        }


@dataclass
class LogLogFit:
    """Least-squares line through log chi against log omega"""

    slope: float
    intercept: float
    residual: float
    stderr: float
    band: Tuple[float, float]
    points: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "slope_stderr": self.stderr,
            "band": list(self.band),
            "points": self.points,
        }


@dataclass(eq=False)
class Susceptibility:
    """chi_0(w) = sum_j C~0_j 2 nu_j / (nu_j^2 + w^2); nu_j = 0 components kept as static weight"""

    omegas: np.ndarray
    values: np.ndarray
    # rows (C~0_j, nu0_j)
    components: np.ndarray
    static_weight: float
    fit: Optional[LogLogFit] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"omega": self.omegas, "chi0": self.values})

    def components_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"C0_tilde": self.components[:, 0], "nu0": self.components[:, 1]})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": int(self.components.shape[0]),
            "static_weight": self.static_weight,
            "omega_range": [float(self.omegas.min()), float(self.omegas.max())],
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


@dataclass(eq=False)
class OffsetComponents:
    """Per-molecule (C~0, nu0) extracted by fitting; nu0 = 0 where T0 is INFINITE"""

    amplitudes: np.ndarray
    rates: np.ndarray
    infinite: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.column_stack((self.amplitudes, self.rates))

    def pairs(self) -> List[Tuple[float, float]]:
        return [(float(a), float(n)) for a, n in zip(self.amplitudes, self.rates)]
