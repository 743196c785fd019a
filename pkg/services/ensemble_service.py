"""
Ensemble Service
Many-molecule environments: Gaussian sampling of (Delta, epsilon), the averaged
correlation function and the Lorentzian-mixture susceptibility behind 1/f noise.
"""

from typing import List, Optional, Sequence, Tuple, Union
import math

import numpy as np
from scipy.stats import linregress

from models.correlation import CorrelationSeries
from models.ensemble import EnsembleCorrelation, EnsembleSpec, LogLogFit, OffsetComponents, Susceptibility
from models.environment import MoleculeParams
from services.correlation_service import correlation_service
from services.fitting_service import fitting_service
from utils.errors import LabError, ParameterError
from utils.logging import get_logger
from utils.parallel import parallel_map

logger = get_logger(__name__)

MODULE = "ensemble"

MIN_BAND_POINTS = 8


class EnsembleService:
    """Service for molecule ensembles and their susceptibility"""

    # Sampling

    def _positive_normal(self, rng: np.random.Generator, mean: float, sigma: float) -> float:
        if sigma == 0:
            return float(mean)
        while True:
            value = float(rng.normal(mean, sigma))
            if value > 0:
                return value

    def sample_molecules(self, spec: EnsembleSpec) -> List[MoleculeParams]:
        """One generator per molecule, seeded from (seed, j)"""
        molecules = []
        for j in range(spec.n_molecules):
            rng = np.random.default_rng([spec.seed, j])
            delta = self._positive_normal(rng, spec.mean_delta, spec.sigma)
            epsilon = self._positive_normal(rng, spec.mean_epsilon, spec.sigma)
            molecules.append(
                MoleculeParams(
                    epsilon=epsilon,
                    delta=delta,
                    r=spec.r,
                    omega_c=spec.omega_c,
                    n_modes=spec.n_modes,
                    n_max=spec.n_max,
                    beta=spec.beta,
                )
            )
        logger.log_computation("sample_molecules", n_molecules=spec.n_molecules, seed=spec.seed)
        return molecules

    def sample_relaxation_rates(self, n: int, nu_min: float, nu_max: float, seed: int = 0) -> np.ndarray:
        """Draws from Q(nu) proportional to 1/nu on [nu_min, nu_max]"""
        if n < 1 or not 0 < nu_min < nu_max:
            raise ParameterError("need n >= 1 and 0 < nu_min < nu_max", module=MODULE, n=n, nu_min=nu_min, nu_max=nu_max)
        rng = np.random.default_rng(seed)
        return np.exp(rng.uniform(math.log(nu_min), math.log(nu_max), size=n))

    # Aggregate correlation

    def _molecule_series(self, index: int, params: MoleculeParams, t_grid: np.ndarray, tail_tolerance: Optional[float]):
        try:
            eig = correlation_service.molecule_eigensystem(params, tail_tolerance)
            thermal = correlation_service.thermal_weights(eig, params.beta)
            series = correlation_service.correlation_function(eig, thermal, t_grid)
            offset = correlation_service.offset(eig, thermal).total
        except LabError as e:
            e.payload["molecule"] = index
            logger.log_error(e, {"molecule": index})
            raise
        return series, offset

    def ensemble_correlation(
        self,
        molecules: Sequence[MoleculeParams],
        t_grid: Sequence[float],
        jobs: Optional[int] = None,
        tail_tolerance: Optional[float] = None,
    ) -> EnsembleCorrelation:
        """C_B(t) = (1/M) sum_j C_B^(j)(t); the offset is the mean of per-molecule offsets"""
        if not molecules:
            raise ParameterError("ensemble needs at least one molecule", module=MODULE)
        times = np.asarray(t_grid, dtype=float)
        results = parallel_map(
            lambda item: self._molecule_series(item[0], item[1], times, tail_tolerance),
            list(enumerate(molecules)),
            jobs,
            label="ensemble",
        )

        values = np.mean([series.values for series, _ in results], axis=0)
        offsets = np.array([offset for _, offset in results])
        slowest = [series.slowest_frequency for series, _ in results if series.slowest_frequency]
        series = CorrelationSeries(
            times=times,
            values=values,
            mean_coupling=float(np.mean([s.mean_coupling for s, _ in results])),
            offset_estimate=float(np.mean(offsets)),
            slowest_frequency=min(slowest) if slowest else None,
            label=f"ensemble_M{len(molecules)}",
        )
        return EnsembleCorrelation(series=series, molecule_offsets=offsets)

    def offset_components(
        self,
        molecules: Sequence[MoleculeParams],
        t_grid: Sequence[float],
        jobs: Optional[int] = None,
        tail_tolerance: Optional[float] = None,
    ) -> OffsetComponents:
        """Per-molecule (C~0, nu0) from the decay-model fit"""
        times = np.asarray(t_grid, dtype=float)

        def extract(item):
            index, params = item
            series, _ = self._molecule_series(index, params, times, tail_tolerance)
            return fitting_service.fit_correlation(series)

        fits = parallel_map(extract, list(enumerate(molecules)), jobs, label="offset_components")
        return OffsetComponents(
            amplitudes=np.array([fit.parameters.C0_tilde for fit in fits]),
            rates=np.array([0.0 if fit.infinite_T0 else fit.relaxation_rate for fit in fits]),
            infinite=np.array([fit.infinite_T0 for fit in fits]),
        )

    # Susceptibility

    def susceptibility(
        self,
        components: Union[OffsetComponents, np.ndarray, Sequence[Tuple[float, float]]],
        omega_grid: Sequence[float],
    ) -> Susceptibility:
        """Angular-frequency convention: the transform of exp(-nu|t|) is 2 nu/(nu^2 + w^2)"""
        if isinstance(components, OffsetComponents):
            table = components.as_array()
        else:
            table = np.asarray(components, dtype=float).reshape(-1, 2)
        amplitudes, rates = table[:, 0], table[:, 1]
        if np.any(rates < 0):
            raise ParameterError("relaxation rates nu0 must be nonnegative", module=MODULE, min_rate=float(rates.min()))

        omegas = np.asarray(omega_grid, dtype=float)
        smooth = rates > 0
        nu = rates[smooth][None, :]
        values = (2.0 * nu / (nu ** 2 + omegas[:, None] ** 2)) @ amplitudes[smooth]
        static = float(np.sum(amplitudes[~smooth]))

        return Susceptibility(omegas=omegas, values=values, components=table, static_weight=static)

    def loglog_slope(self, chi: Union[Susceptibility, Tuple[np.ndarray, np.ndarray]], band: Tuple[float, float]) -> LogLogFit:
        """Least-squares line through (log w, log chi) inside the band"""
        omegas, values = (chi.omegas, chi.values) if isinstance(chi, Susceptibility) else map(np.asarray, chi)
        low, high = band
        inside = (omegas >= low) & (omegas <= high) & (values > 0)
        if np.count_nonzero(inside) < MIN_BAND_POINTS:
            raise ParameterError(
                f"band holds fewer than {MIN_BAND_POINTS} grid points",
                module=MODULE,
                band=[low, high],
                points=int(np.count_nonzero(inside)),
            )
        x, y = np.log(omegas[inside]), np.log(values[inside])
        fit = linregress(x, y)
        residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
        result = LogLogFit(
            slope=float(fit.slope),
            intercept=float(fit.intercept),
            residual=residual,
            stderr=float(fit.stderr),
            band=(float(low), float(high)),
            points=int(np.count_nonzero(inside)),
        )
        if isinstance(chi, Susceptibility):
            chi.fit = result
        return result

    def band_flattening(self, chi: Susceptibility, decades: float = 1.0, low: Optional[float] = None) -> LogLogFit:
        """Slope on the lowest `decades` above `low` (default: the bottom of the omega grid)"""
        low = float(np.min(chi.omegas)) if low is None else float(low)
        # inclusive of grid points on the decade edges
        return self.loglog_slope((chi.omegas, chi.values), (low * (1 - 1e-9), low * 10.0 ** decades * (1 + 1e-9)))


# Global ensemble service instance
ensemble_service = EnsembleService()
