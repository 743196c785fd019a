from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from models.correlation import CorrelationSeries
from utils.validation import require_hermitian, require_matching

MODULE = "master_eq"

RateHandle = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


class IntegratorVariant(Enum):
    TIME_LOCAL = "TIME_LOCAL"
    CONVOLUTED = "CONVOLUTED"
    SECULAR_RATE = "SECULAR_RATE"


class HalfFourierStatus(Enum):
    CONVERGED = "CONVERGED"
    NON_CONVERGENT = "NON_CONVERGENT"


class Stability(Enum):
    STABLE = "STABLE"
    UNSTABLE = "UNSTABLE"


class PlateauStatus(Enum):
    CONVERGED = "CONVERGED"
    NOT_CONVERGED = "NOT_CONVERGED"


@dataclass(eq=False)
class SystemSpec:
    """
    System Hamiltonian H_S and coupling S. The dynamics run in the eigenbasis of
    the renormalized H~_S = H_S + g <B> S.
    """

    hamiltonian: np.ndarray
    coupling: np.ndarray
    coupling_strength: float = 1.0
    bath_mean: float = 0.0
    label: str = "system"
    energies: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)
    coupling_eigen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        self.coupling = np.asarray(self.coupling, dtype=complex)
        require_hermitian(self.hamiltonian, "system Hamiltonian", module=MODULE)
        require_hermitian(self.coupling, "system coupling", module=MODULE)
        require_matching([self.hamiltonian.shape[0], self.coupling.shape[0]], "system operators", MODULE)

        renormalized = self.hamiltonian + self.coupling_strength * self.bath_mean * self.coupling
        self.energies, self.eigenvectors = linalg.eigh(0.5 * (renormalized + renormalized.conj().T))
        self.coupling_eigen = self.eigenvectors.conj().T @ self.coupling @ self.eigenvectors

    @property
    def dimension(self) -> int:
        return int(self.energies.size)

    @property
    def bohr_frequencies(self) -> np.ndarray:
        """E_ab = E_a - E_b"""
        return self.energies[:, None] - self.energies[None, :]

    def to_eigenbasis(self, rho: np.ndarray) -> np.ndarray:
        return self.eigenvectors.conj().T @ rho @ self.eigenvectors

    def from_eigenbasis(self, rho: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ rho @ self.eigenvectors.conj().T

    def gibbs_state(self, beta: float) -> np.ndarray:
        """exp(-beta H~_S)/Z in the eigenbasis"""
        weights = np.exp(-beta * (self.energies - self.energies[0]))
        return np.diag(weights / weights.sum()).astype(complex)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "dimension": self.dimension,
            "coupling_strength": self.coupling_strength,
            "bath_mean": self.bath_mean,
            "energies": self.energies.tolist(),
        }


@dataclass(eq=False)
class BathInput:
    """C_B(t) = alpha_B(t) + C_0, with alpha_B on a grid, as a rate handle, or absent"""

    offset: float = 0.0
    times: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    # omega -> (gamma, sigma) in closed form
    rates: Optional[RateHandle] = None
    beta: Optional[float] = None
    label: str = "bath"

    def __post_init__(self):
        if not self.offset >= 0:
            raise ValueError("offset C_0 must be nonnegative")
        if (self.times is None) != (self.alpha is None):
            raise ValueError("times and alpha must be given together")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            self.alpha = np.asarray(self.alpha, dtype=complex)
            if self.times.shape != self.alpha.shape or self.times.ndim != 1:
                raise ValueError("alpha must be sampled on the one-dimensional time grid")
            if self.times[0] != 0.0:
                raise ValueError("alpha grid must start at t = 0")

    @property
    def has_grid(self) -> bool:
        return self.times is not None

    @classmethod
    def from_series(cls, series: CorrelationSeries, offset: Optional[float] = None, beta: Optional[float] = None) -> "BathInput":
        """Split a correlation series into its decaying part and the offset"""
        if offset is None:
            offset = series.offset_estimate or 0.0
        return cls(
            offset=float(offset),
            times=series.times.copy(),
            alpha=series.values - offset,
            beta=beta,
            label=series.label,
        )

    def correlation(self) -> Optional[np.ndarray]:
        return None if self.alpha is None else self.alpha + self.offset

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "offset": self.offset,
            "grid_points": 0 if self.times is None else int(self.times.size),
            "closed_form_rates": self.rates is not None,
            "beta": self.beta,
        }


@dataclass(eq=False)
class HalfFourierResult:
    """gamma(w) + i sigma(w) = int_0^inf alpha(t) exp(iwt) dt"""

    omegas: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    status: HalfFourierStatus
    tail_rate: Optional[float] = None
    tail_magnitude: float = 0.0

    @property
    def coefficients(self) -> np.ndarray:
        return self.gamma + 1j * self.sigma

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"omega": self.omegas, "gamma": self.gamma, "sigma": self.sigma})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "tail_rate": self.tail_rate,
            "tail_magnitude": self.tail_magnitude,
            "points": int(self.omegas.size),
        }


@dataclass
class KmsReport:
    """gamma(w)/gamma(-w) against exp(beta w)"""

    omega: float
    beta: float
    ratio: float
    expected: float

    @property
    def relative_error(self) -> float:
        return abs(self.ratio / self.expected - 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "omega": self.omega,
            "beta": self.beta,
            "ratio": self.ratio,
            "expected": self.expected,
            "relative_error": self.relative_error,
        }


@dataclass
class RunDiagnostics:
    trace_drift: float
    hermiticity_drift: float
    min_eigenvalue: float
    offset_norm_half: float = 0.0
    offset_norm_final: float = 0.0
    max_rate_magnitude: float = 0.0
    stability: Stability = Stability.STABLE
    secular_gap_ratio: Optional[float] = None
    gamma_variant_difference: Optional[float] = None
    diverged_at: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trace_drift": self.trace_drift,
            "hermiticity_drift": self.hermiticity_drift,
            "min_eigenvalue": self.min_eigenvalue,
            "offset_norm_half": self.offset_norm_half,
            "offset_norm_final": self.offset_norm_final,
            "max_rate_magnitude": self.max_rate_magnitude,
            "stability": self.stability.value,
            "secular_gap_ratio": self.secular_gap_ratio,
            "gamma_variant_difference": self.gamma_variant_difference,
            "diverged_at": self.diverged_at,
        }


@dataclass(eq=False)
class MasterEqRun:
    """Interaction-picture trajectory in the eigenbasis of H~_S"""

    variant: IntegratorVariant
    times: np.ndarray
    states: np.ndarray
    system: SystemSpec
    bath: BathInput
    dt: float
    diagnostics: RunDiagnostics
    gamma_variant: str = "infinite"
    # plateau populations, filled by the secular rate equations
    steady_populations: Optional[np.ndarray] = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def schrodinger_states(self) -> np.ndarray:
        """rho_S[a,b](t) = exp(-i E_ab t) rho_I[a,b](t)"""
        phases = np.exp(-1j * self.times[:, None, None] * self.system.bohr_frequencies[None, :, :])
        return self.states * phases

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))

    def to_frame(self) -> pd.DataFrame:
        """Schrodinger-picture density matrix in the original basis, re_/im_ column pairs"""
        rotated = np.einsum("ij,tjk,lk->til", self.system.eigenvectors, self.schrodinger_states(), self.system.eigenvectors.conj())
        columns = {"t": self.times}
        d = self.system.dimension
        for i in range(d):
            for j in range(d):
                columns[f"re_rho_{i}_{j}"] = rotated[:, i, j].real
                columns[f"im_rho_{i}_{j}"] = rotated[:, i, j].imag
        return pd.DataFrame(columns)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant.value,
            "gamma_variant": self.gamma_variant,
            "steps": int(self.times.size - 1),
            "dt": self.dt,
            "t_max": float(self.times[-1]),
            "system": self.system.to_dict(),
            "bath": self.bath.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "final_populations": self.populations()[-1].tolist(),
            "steady_populations": None if self.steady_populations is None else self.steady_populations.tolist(),
        }


@dataclass(eq=False)
class TrajectoryGap:
    times: np.ndarray
    gaps: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if self.gaps.size else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "gap": self.gaps})


@dataclass(eq=False)
class SteadyStateReport:
    status: PlateauStatus
    plateau_change: float
    gibbs_distance: float
    initial_state_dependence: Optional[float]
    plateau_state: np.ndarray
    gibbs_state: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "plateau_change": self.plateau_change,
            "gibbs_distance": self.gibbs_distance,
            "initial_state_dependence": self.initial_state_dependence,
            "plateau_populations": np.real(np.diag(self.plateau_state)).tolist(),
            "gibbs_populations": np.real(np.diag(self.gibbs_state)).tolist(),
        }
