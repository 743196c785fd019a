"""
ETH Synthesis Service
Synthetic environments whose coupling obeys the eigenstate-thermalization ansatz

    B~_kl = B(E) delta_kl + exp(-S(E)/2) f_0(omega_kl) R_kl,   E = (eps_k + eps_l)/2

plus the checks that the resulting correlation decays and its offset shrinks
with the Hilbert-space dimension.
"""

from typing import Optional, Sequence
import math

import numpy as np
from scipy import stats

from models.correlation import CorrelationSeries
from models.eth import DecayCheck, EthEnvironment, EthSpec, OffsetStudy, PolynomialDecayReport
from services.correlation_service import correlation_service, evaluate_pair_sum
from utils.errors import ParameterError
from utils.logging import get_logger
from utils.parallel import parallel_map

logger = get_logger(__name__)

MODULE = "eth_synth"

TAIL_RATIO_LIMIT = 0.5


class EthService:
    """Service for ETH-ansatz environments"""

    def level_density(self, spec: EthSpec):
        """Truncated Gaussian over [-band, band] with width sigma_E"""
        edge = spec.band_half_width / spec.energy_width
        return stats.truncnorm(-edge, edge, loc=0.0, scale=spec.energy_width)

    def entropy(self, spec: EthSpec, energies) -> np.ndarray:
        """S(E) = ln(dim p(E)), quadratic in E inside the band"""
        return np.log(spec.dim) + self.level_density(spec).logpdf(np.asarray(energies, dtype=float))

    def envelope(self, spec: EthSpec, omega) -> np.ndarray:
        return np.exp(-np.asarray(omega) ** 2 / (2.0 * spec.envelope_width ** 2))

    def sample_spectrum(self, spec: EthSpec, rng: np.random.Generator) -> np.ndarray:
        density = self.level_density(spec)
        if spec.spectrum == "quantile":
            return density.ppf((np.arange(spec.dim) + 0.5) / spec.dim)
        return np.sort(density.rvs(size=spec.dim, random_state=rng))

    def _noise(self, spec: EthSpec, rng: np.random.Generator) -> np.ndarray:
        """Hermitian R with unit-variance entries"""
        upper = np.triu(rng.standard_normal((spec.dim, spec.dim)), k=1)
        diagonal = np.diag(rng.standard_normal(spec.dim))
        if spec.noise == "complex":
            imaginary = np.triu(rng.standard_normal((spec.dim, spec.dim)), k=1)
            upper = (upper + 1j * imaginary) / math.sqrt(2.0)
        return upper + upper.conj().T + diagonal

    def _amplitudes(self, spec: EthSpec, energies: np.ndarray) -> np.ndarray:
        """exp(-S(E)/2) f_0(omega) for every pair"""
        mean_energy = 0.5 * (energies[:, None] + energies[None, :])
        omega = energies[:, None] - energies[None, :]
        return spec.noise_amplitude * np.exp(-0.5 * self.entropy(spec, mean_energy)) * self.envelope(spec, omega)

    def generate_eth_environment(self, spec: EthSpec) -> EthEnvironment:
        """Diagonal Hamiltonian (sampled spectrum) and Hermitian B from the ansatz"""
        rng = np.random.default_rng(spec.seed)
        energies = self.sample_spectrum(spec, rng)
        noise = self._noise(spec, rng)

        coupling = self._amplitudes(spec, energies) * noise
        if spec.typical_diagonal:
            np.fill_diagonal(coupling, 0.0)
        coupling[np.diag_indices(spec.dim)] += spec.diagonal_value

        eig = correlation_service.from_spectrum(energies, coupling, label="H_ETH")
        logger.log_computation("generate_eth_environment", dim=spec.dim, seed=spec.seed, noise=spec.noise)
        return EthEnvironment(spec=spec, eigensystem=eig, entropy=self.entropy(spec, energies))

    def eth_correlation(self, environment: EthEnvironment, t_grid: Sequence[float]) -> CorrelationSeries:
        eig = environment.eigensystem
        thermal = correlation_service.thermal_weights(eig, environment.spec.beta)
        series = correlation_service.correlation_function(eig, thermal, t_grid)
        series.label = f"eth_dim{environment.dimension}"
        return series

    def noise_averaged_correlation(self, spec: EthSpec, t_grid: Sequence[float]) -> CorrelationSeries:
        """Correlation with |R_kl|^2 replaced by its mean, 1"""
        rng = np.random.default_rng(spec.seed)
        energies = self.sample_spectrum(spec, rng)
        shifted = energies - energies[0]
        eta = np.exp(-spec.beta * shifted)
        eta /= eta.sum()

        weights = eta[:, None] * self._amplitudes(spec, energies) ** 2
        static = 0.0 if spec.typical_diagonal else float(np.trace(weights))
        np.fill_diagonal(weights, 0.0)
        omega = energies[:, None] - energies[None, :]
        mask = weights > 0

        times = np.asarray(t_grid, dtype=float)
        values = evaluate_pair_sum(times, omega[mask], weights[mask], static)
        return CorrelationSeries(
            times=times,
            values=values,
            mean_coupling=spec.diagonal_value,
            offset_estimate=static,
            label=f"eth_noise_averaged_dim{spec.dim}",
        )

    def verify_polynomial_decay(self, series: CorrelationSeries, n_order: int = 1) -> PolynomialDecayReport:
        """
        C_N = max |C(t)| (1+t)^N over the grid. PASS when C_N is finite and
        the bound is not saturated at the grid end.
        """
        if n_order < 0:
            raise ParameterError("n_order must be nonnegative", module=MODULE, n_order=n_order)
        scaled = np.abs(series.values) * (1.0 + np.abs(series.times)) ** n_order
        index = int(np.argmax(scaled))
        bound = float(scaled[index])

        if not math.isfinite(bound):
            return PolynomialDecayReport(n_order, bound, math.inf, float(series.times[index]), DecayCheck.FAIL)
        tail_ratio = float(scaled[-1] / bound) if bound > 0 else 0.0
        status = DecayCheck.PASS if tail_ratio < TAIL_RATIO_LIMIT else DecayCheck.FAIL
        return PolynomialDecayReport(
            n_order=n_order,
            bound_constant=bound,
            tail_ratio=tail_ratio,
            saturation_time=float(series.times[index]),
            status=status,
        )

    def offset_study(
        self,
        dims: Sequence[int],
        seeds: Sequence[int],
        base_spec: Optional[EthSpec] = None,
        jobs: Optional[int] = None,
    ) -> OffsetStudy:
        """C_0 per (dim, seed), one independent generator per cell"""
        base_spec = base_spec or EthSpec()
        dims = [int(d) for d in dims]
        seeds = [int(s) for s in seeds]
        base = base_spec.model_dump()
        cells = [EthSpec.model_validate({**base, "dim": dim, "seed": seed}) for dim in dims for seed in seeds]

        def run_cell(spec):
            environment = self.generate_eth_environment(spec)
            eig = environment.eigensystem
            thermal = correlation_service.thermal_weights(eig, base_spec.beta)
            return correlation_service.offset(eig, thermal).total

        offsets = np.array(parallel_map(run_cell, cells, jobs, label="eth_offset_study")).reshape(len(dims), len(seeds))
        study = OffsetStudy(dims=dims, seeds=seeds, offsets=offsets)
        logger.info("ETH offset study finished", medians=study.medians())
        return study


# Global ETH service instance
eth_service = EthService()
