from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd


class DaviesClass(Enum):
    CONVERGENT = "CONVERGENT"
    DIVERGENT = "DIVERGENT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(eq=False)
class EigenSystem:
    """Ascending eigenvalues, eigenvectors (columns) and B in the eigenbasis"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    coupling: np.ndarray
    label: str = "H"

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def spectral_range(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0]) if self.dimension else 0.0

    def transition_frequencies(self) -> np.ndarray:
        """omega_kl = eps_k - eps_l"""
        return self.eigenvalues[:, None] - self.eigenvalues[None, :]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "dimension": self.dimension,
            "ground_energy": float(self.eigenvalues[0]) if self.dimension else None,
            "spectral_range": self.spectral_range,
        }

    def __repr__(self):
        return f"<EigenSystem(label='{self.label}', dimension={self.dimension})>"


@dataclass(eq=False)
class ThermalState:
    """Thermal weights eta_k on the eigenstates"""

    weights: np.ndarray
    beta: float
    # log Z_E, kept in log form to survive large beta * energy
    log_partition_function: float
    zero_temperature: bool = False

    @property
    def partition_function(self) -> float:
        return float(np.exp(self.log_partition_function))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": None if self.zero_temperature else self.beta,
            "zero_temperature": self.zero_temperature,
            "log_partition_function": self.log_partition_function,
            "max_weight": float(np.max(self.weights)),
        }


@dataclass(eq=False)
class CorrelationSeries:
    """Complex C_B(t) on a uniform grid plus renormalization metadata"""

    times: np.ndarray
    values: np.ndarray
    mean_coupling: float = 0.0
    offset_estimate: Optional[float] = None
    slowest_frequency: Optional[float] = None
    renormalized: bool = True
    label: str = "C_B"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same shape")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def scaled(self, factor: float, label: Optional[str] = None) -> "CorrelationSeries":
        return CorrelationSeries(
            times=self.times.copy(),
            values=self.values * factor,
            mean_coupling=self.mean_coupling,
            offset_estimate=None if self.offset_estimate is None else self.offset_estimate * factor,
            slowest_frequency=self.slowest_frequency,
            renormalized=self.renormalized,
            label=label or self.label,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "re_C": self.values.real, "im_C": self.values.imag})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "points": int(self.times.size),
            "t_max": float(self.times[-1]) if self.times.size else 0.0,
            "mean_coupling": self.mean_coupling,
            "offset_estimate": self.offset_estimate,
            "slowest_frequency": self.slowest_frequency,
            "renormalized": self.renormalized,
        }

    def __repr__(self):
        return f"<CorrelationSeries(label='{self.label}', points={self.times.size})>"


@dataclass
class OffsetReport:
    """Offset C_0 = variance part + degeneracy part d_0"""

    total: float
    variance_part: float
    degeneracy_part: float
    degeneracy_tolerance: float
    degenerate_pairs: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C0": self.total,
            "variance_part": self.variance_part,
            "degeneracy_part": self.degeneracy_part,
            "degeneracy_tolerance": self.degeneracy_tolerance,
            "degenerate_pairs": self.degenerate_pairs,
        }


@dataclass(eq=False)
class BkkDistribution:
    """Single-eigenstate expectations B^kk against rescaled energy"""

    rescaled_energies: np.ndarray
    diagonal: np.ndarray
    weights: np.ndarray
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    thermal_histogram: np.ndarray
    participation: np.ndarray
    participation_range: float
    participation_threshold: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "rescaled_energy": self.rescaled_energies,
                "B_kk": self.diagonal,
                "eta": self.weights,
                "F_beta": self.participation,
            }
        )

    def histogram_frame(self) -> pd.DataFrame:
        centers = 0.5 * (self.histogram_edges[:-1] + self.histogram_edges[1:])
        return pd.DataFrame(
            {"B_kk": centers, "count": self.histogram_counts, "thermal_weight": self.thermal_histogram}
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "states": int(self.diagonal.size),
            "max_abs_B_kk": float(np.max(np.abs(self.diagonal))) if self.diagonal.size else 0.0,
            "F_beta_total": float(self.participation[-1]) if self.participation.size else 0.0,
            "participation_range": self.participation_range,
            "participation_threshold": self.participation_threshold,
        }


@dataclass
class DaviesReport:
    """Partial integrals of |C(t)|(1+t)^eps on a doubling horizon sequence"""

    classification: DaviesClass
    epsilon_exp: float
    horizons: List[float]
    integrals: List[float]
    doubling_change: float
    growth_exponent: Optional[float]
    thresholds: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classification": self.classification.value,
            "epsilon_exp": self.epsilon_exp,
            "horizons": self.horizons,
            "integrals": self.integrals,
            "doubling_change": self.doubling_change,
            "growth_exponent": self.growth_exponent,
            "thresholds": self.thresholds,
        }


@dataclass(eq=False)
class OffsetScan:
    """beta x r heatmap of offsets"""

    betas: np.ndarray
    rs: np.ndarray
    offsets: np.ndarray
    reports: List[OffsetReport]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for (i, beta) in enumerate(self.betas):
            for (j, r) in enumerate(self.rs):
                report = self.reports[i * len(self.rs) + j]
                rows.append(
                    {
                        "beta": float(beta),
                        "r": float(r),
                        "C0": report.total,
                        "variance_part": report.variance_part,
                        "degeneracy_part": report.degeneracy_part,
                    }
                )
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "betas": self.betas.tolist(),
            "rs": self.rs.tolist(),
            "C0": self.offsets.tolist(),
        }
