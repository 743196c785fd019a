"""
Environment Model Service
Truncated-Hilbert-space Hamiltonians and coupling operators for single dye
molecules and pure harmonic baths, including Ohmic spectral-density discretization.

Tensor ordering is electronic factor first, then mode 1 ... mode L.
"""

from functools import reduce
from typing import Optional, Sequence, Tuple, Union
import math

import numpy as np
from scipy.special import gammaln, logsumexp

from models.environment import ModeSet, MoleculeParams, OperatorMatrix
from utils.config import get_settings
from utils.errors import DimensionMismatchError, ParameterError
from utils.logging import get_logger
from utils.validation import require_dimension

logger = get_logger(__name__)
settings = get_settings()

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

MODULE = "env_model"

MAX_TAIL_LEVELS = 512


class EnvironmentService:
    """Service for constructing single-molecule and harmonic environment operators"""

    def __init__(self):
        self.max_dimension = settings.MAX_DIMENSION
        self.tail_tolerance = settings.FOCK_TAIL_TOLERANCE

    # Spectral density

    def ohmic_spectral_density(self, omega, r: float, omega_c: float) -> np.ndarray:
        """J(w) = r^2 (w/w_c) exp(-w/w_c) on [0, 2 w_c], zero elsewhere"""
        if omega_c <= 0:
            raise ParameterError("omega_c must be positive", module=MODULE, omega_c=omega_c)
        omega = np.asarray(omega, dtype=float)
        inside = (omega > 0) & (omega <= 2.0 * omega_c)
        x = np.where(inside, omega, 0.0) / omega_c
        return np.where(inside, r ** 2 * x * np.exp(-x), 0.0)

    def discretize_spectral_density(self, r: float, omega_c: float, n_modes: int) -> ModeSet:
        """Uniform grid w_l = l * dw with g_l = sqrt(J(w_l) dw), dw = 2 w_c / L"""
        if n_modes < 1:
            raise ParameterError("at least one mode is required (L >= 1)", module=MODULE, n_modes=n_modes)
        if not omega_c > 0:
            raise ParameterError("omega_c must be positive", module=MODULE, omega_c=omega_c)
        if not 0.0 <= r <= 1.0:
            raise ParameterError("r must lie in [0, 1]", module=MODULE, r=r)

        spacing = 2.0 * omega_c / n_modes
        frequencies = spacing * np.arange(1, n_modes + 1)
        # last grid point sits exactly on the cutoff
        frequencies[-1] = 2.0 * omega_c
        couplings = np.sqrt(self.ohmic_spectral_density(frequencies, r, omega_c) * spacing)

        modes = ModeSet(frequencies=frequencies, couplings=couplings, omega_c=omega_c)
        logger.log_computation("discretize_spectral_density", n_modes=n_modes, total_coupling=modes.total_coupling)
        return modes

    # Fock truncation

    def displaced_thermal_distribution(self, beta: float, omega: float, displacement: float, n_levels: int) -> np.ndarray:
        """
        Occupation P(n), n < n_levels, of a thermal mode shifted by a coherent
        displacement d:

            P(n) = (1-q) q^n exp(-d^2 (1-q)) L_n(-d^2 (1-q)^2 / q),  q = exp(-beta w)

        evaluated as a log-sum over the Laguerre terms so that q -> 0 stays finite.
        """
        if beta <= 0 or omega <= 0:
            raise ParameterError(
                "displaced thermal occupation needs beta > 0 and omega > 0", module=MODULE, beta=beta, omega=omega
            )
        log_q = -beta * omega
        one_minus_q = -math.expm1(log_q)
        n = np.arange(n_levels)
        if displacement == 0:
            return np.exp(math.log(one_minus_q) + n * log_q)

        d2 = float(displacement) ** 2
        nn, kk = np.meshgrid(n, n, indexing="ij")
        valid = kk <= nn
        rest = np.where(valid, nn - kk, 0)
        terms = (
            gammaln(nn + 1)
            - gammaln(rest + 1)
            - 2.0 * gammaln(kk + 1)
            + rest * log_q
            + kk * math.log(d2 * one_minus_q ** 2)
        )
        terms = np.where(valid, terms, -np.inf)
        return np.exp(math.log(one_minus_q) - d2 * one_minus_q + logsumexp(terms, axis=1))

    def fock_truncation(
        self, beta: float, omega: float, tolerance: Optional[float] = None, displacement: float = 0.0
    ) -> int:
        """
        Smallest n_max >= 1 whose occupation tail P(n > n_max) is below tolerance.

        With zero displacement this is the bare thermal tail exp(-beta*omega*(n_max+1)).
        A spin-dependent shift of the mode moves population to higher Fock levels,
        so a displaced mode takes its tail from the displaced thermal occupation.
        """
        tolerance = tolerance or self.tail_tolerance
        if not 0 < tolerance < 1:
            raise ParameterError("tail tolerance must lie in (0, 1)", module=MODULE, tolerance=tolerance)
        if omega <= 0:
            raise ParameterError("mode frequency must be positive", module=MODULE, omega=omega)
        if beta <= 0:
            raise ParameterError(
                "the thermal tail rule needs beta > 0; pass n_max explicitly at infinite temperature",
                module=MODULE,
                beta=beta,
            )
        ratio = math.log(tolerance) / (-beta * omega)
        thermal = max(1, int(math.floor(ratio)))
        if displacement == 0:
            return thermal

        displacement = abs(float(displacement))
        n_levels = thermal + 16 + int(math.ceil(8.0 * displacement * (displacement + 1.0)))
        while True:
            occupation = self.displaced_thermal_distribution(beta, omega, displacement, n_levels)
            if occupation[-1] < 1e-3 * tolerance:
                break
            if n_levels > MAX_TAIL_LEVELS:
                raise ParameterError(
                    "displaced thermal tail does not fall below the tolerance",
                    module=MODULE,
                    tolerance=tolerance,
                    displacement=displacement,
                )
            n_levels *= 2

        # tails[m] = P(n >= m), so P(n > n_max) = tails[n_max + 1]
        tails = np.cumsum(occupation[::-1])[::-1]
        below = np.nonzero(tails[1:] < tolerance)[0]
        return max(thermal, int(below[0]))

    def resolve_truncation(
        self, params: MoleculeParams, modes: ModeSet, tolerance: Optional[float] = None
    ) -> Union[int, Tuple[int, ...]]:
        """params.n_max when given, else the displaced tail rule mode by mode"""
        if params.n_max is not None:
            return params.n_max
        if len(modes) == 0:
            return 1
        # the sigma_z branches sit at -+g/w, so B connects states 2g/w apart
        return tuple(
            self.fock_truncation(params.beta, float(w), tolerance, displacement=2.0 * abs(float(g)) / float(w))
            for w, g in zip(modes.frequencies, modes.couplings)
        )

    # Operator helpers

    def annihilation_operator(self, n_max: int) -> np.ndarray:
        """Truncated b with <n-1|b|n> = sqrt(n)"""
        return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)

    def embed(self, operator: np.ndarray, position: int, local_dimensions: Sequence[int]) -> np.ndarray:
        """Place a single-factor operator at `position` of the tensor product"""
        factors = [
            operator if index == position else np.eye(dim, dtype=complex)
            for index, dim in enumerate(local_dimensions)
        ]
        return reduce(np.kron, factors)

    def _truncations(self, n_max: Union[int, Sequence[int]], n_modes: int) -> Tuple[int, ...]:
        if isinstance(n_max, (int, np.integer)):
            truncations = (int(n_max),) * n_modes
        else:
            truncations = tuple(int(n) for n in n_max)
        if len(truncations) != n_modes:
            raise DimensionMismatchError(
                "one truncation per mode is required",
                module=MODULE,
                n_modes=n_modes,
                truncations=list(truncations),
            )
        if any(n < 1 for n in truncations):
            raise ParameterError("n_max must be >= 1", module=MODULE, truncations=list(truncations))
        return truncations

    def _bath_operators(self, modes: ModeSet, truncations: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
        """Free bath Hamiltonian (diagonal) and X = sum g (b + b^dagger) on the bath factor"""
        local = [n + 1 for n in truncations]
        dimension = int(np.prod(local)) if local else 1
        if not local:
            return np.zeros((1, 1), dtype=complex), np.zeros((1, 1), dtype=complex)

        occupations = np.indices(local).reshape(len(local), -1)
        energies = modes.frequencies @ occupations
        hamiltonian = np.diag(energies.astype(complex))

        displacement = np.zeros((dimension, dimension), dtype=complex)
        for index, (g, n) in enumerate(zip(modes.couplings, truncations)):
            if g == 0.0:
                continue
            b = self.annihilation_operator(n)
            displacement += g * self.embed(b + b.conj().T, index, local)
        return hamiltonian, displacement

    # Hamiltonians

    def build_single_molecule_hamiltonian(
        self,
        params: MoleculeParams,
        modes: Optional[ModeSet] = None,
        n_max: Optional[Union[int, Sequence[int]]] = None,
    ) -> OperatorMatrix:
        """
        H = 1/2 (eps sz - Delta sx) (x) 1 + sum w b^dagger b + sz (x) sum g (b + b^dagger)
        """
        if modes is None:
            modes = (
                self.discretize_spectral_density(params.r, params.omega_c, params.n_modes)
                if params.n_modes > 0
                else ModeSet(frequencies=np.array([]), couplings=np.array([]))
            )
        if n_max is None:
            n_max = self.resolve_truncation(params, modes)
        truncations = self._truncations(n_max, len(modes))

        structure = (2,) + tuple(n + 1 for n in truncations)
        dimension = int(np.prod(structure))
        require_dimension(dimension, "single-molecule Hamiltonian", MODULE, self.max_dimension)

        electronic = 0.5 * (params.epsilon * SIGMA_Z - params.delta * SIGMA_X)
        bath_hamiltonian, displacement = self._bath_operators(modes, truncations)
        bath_identity = np.eye(bath_hamiltonian.shape[0], dtype=complex)

        matrix = (
            np.kron(electronic, bath_identity)
            + np.kron(IDENTITY_2, bath_hamiltonian)
            + np.kron(SIGMA_Z, displacement)
        )

        logger.log_computation("build_single_molecule_hamiltonian", dimension=dimension, n_modes=len(modes))
        return OperatorMatrix(matrix=matrix, label="H_E", structure=structure)

    def build_coupling_operator(self, spec: Union[OperatorMatrix, Sequence[int]]) -> OperatorMatrix:
        """B = sigma_x (x) 1 for the tensor structure of `spec`"""
        structure = tuple(spec.structure) if isinstance(spec, OperatorMatrix) else tuple(int(d) for d in spec)
        if not structure or structure[0] != 2:
            raise DimensionMismatchError(
                "coupling operator needs a structure whose first factor is the two-level system",
                module=MODULE,
                structure=list(structure),
            )
        bath_dimension = int(np.prod(structure[1:])) if len(structure) > 1 else 1
        if isinstance(spec, OperatorMatrix) and spec.dimension != 2 * bath_dimension:
            raise DimensionMismatchError(
                "Hamiltonian dimension disagrees with its tensor structure",
                module=MODULE,
                dimension=spec.dimension,
                structure=list(structure),
            )
        matrix = np.kron(SIGMA_X, np.eye(bath_dimension, dtype=complex))
        return OperatorMatrix(matrix=matrix, label="B", structure=structure)

    def build_harmonic_bath(
        self, modes: ModeSet, n_max: Union[int, Sequence[int]]
    ) -> Tuple[OperatorMatrix, OperatorMatrix]:
        """H = sum w b^dagger b and B = sum g (b + b^dagger) without the spin"""
        if len(modes) == 0:
            raise ParameterError("harmonic bath needs at least one mode", module=MODULE)
        truncations = self._truncations(n_max, len(modes))
        structure = tuple(n + 1 for n in truncations)
        require_dimension(int(np.prod(structure)), "harmonic bath", MODULE, self.max_dimension)

        hamiltonian, coupling = self._bath_operators(modes, truncations)
        logger.log_computation("build_harmonic_bath", dimension=hamiltonian.shape[0], n_modes=len(modes))
        return (
            OperatorMatrix(matrix=hamiltonian, label="H_bath", structure=structure),
            OperatorMatrix(matrix=coupling, label="B_bath", structure=structure),
        )


# Global environment service instance
environment_service = EnvironmentService()
