"""
Eigenbasis Correlation Service
Exact diagonalization, thermal states, eigenbasis correlation functions, the
offset C_0 with its degeneracy term, B^kk statistics and the Davies diagnostic.
"""

from typing import Optional, Sequence, Tuple, Union
import math

import numpy as np
from scipy import linalg
from scipy.integrate import cumulative_trapezoid
from scipy.signal import windows
from scipy.stats import linregress

from models.correlation import (
    BkkDistribution,
    CorrelationSeries,
    DaviesClass,
    DaviesReport,
    EigenSystem,
    OffsetReport,
    OffsetScan,
    ThermalState,
)
from models.environment import MoleculeParams, OperatorMatrix
from services.environment_service import environment_service
from utils.config import get_settings
from utils.errors import DimensionMismatchError, EigensolverError, ParameterError
from utils.logging import get_logger
from utils.parallel import parallel_map
from utils.validation import require_finite, require_hermitian, require_matching

logger = get_logger(__name__)
settings = get_settings()

MODULE = "eigencorr"

# pairs lighter than this fraction of C(0) do not set time scales
SIGNIFICANT_WEIGHT = 1e-10

MatrixLike = Union[OperatorMatrix, np.ndarray]


def _as_array(operator: MatrixLike) -> np.ndarray:
    if isinstance(operator, OperatorMatrix):
        return operator.matrix
    return np.asarray(operator, dtype=complex)


def evaluate_pair_sum(times: np.ndarray, frequencies: np.ndarray, weights: np.ndarray, static: float = 0.0) -> np.ndarray:
    """static + sum_p w_p exp(i omega_p t), evaluated in blocks of time points"""
    times = np.asarray(times, dtype=float)
    values = np.full(times.size, static, dtype=complex)
    if frequencies.size:
        chunk = max(1, (1 << 22) // frequencies.size)
        flat = times.reshape(-1)
        for start in range(0, flat.size, chunk):
            block = flat[start:start + chunk]
            values[start:start + chunk] += np.exp(1j * np.outer(block, frequencies)) @ weights
    return values.reshape(times.shape)


class CorrelationService:
    """Service for eigenbasis correlation functions and offsets"""

    def __init__(self):
        self.degeneracy_rtol = settings.DEGENERACY_RELATIVE_TOLERANCE
        self.weight_cutoff = settings.WEIGHT_CUTOFF

    # Diagonalization

    def diagonalize(self, hamiltonian: MatrixLike, coupling: Optional[MatrixLike] = None, label: str = "H") -> EigenSystem:
        """Hermitian eigendecomposition with B transformed to the eigenbasis"""
        matrix = _as_array(hamiltonian)
        require_hermitian(matrix, label, module=MODULE)
        matrix = 0.5 * (matrix + matrix.conj().T)

        try:
            eigenvalues, eigenvectors = linalg.eigh(matrix)
        except linalg.LinAlgError as e:
            logger.error(f"Eigensolver failed: {e}", dimension=matrix.shape[0])
            raise EigensolverError(f"eigensolver did not converge: {e}", module=MODULE, dimension=matrix.shape[0])

        scale = max(1.0, float(eigenvalues[-1] - eigenvalues[0]), float(np.max(np.abs(eigenvalues))))
        residual = float(np.max(np.abs((eigenvectors * eigenvalues) @ eigenvectors.conj().T - matrix)))
        if residual > 1e-10 * scale:
            raise EigensolverError(
                "eigendecomposition does not reconstruct the Hamiltonian",
                module=MODULE,
                residual=residual,
            )

        coupling_eig = None
        if coupling is not None:
            b = _as_array(coupling)
            require_matching([matrix.shape[0], b.shape[0]], "Hamiltonian and coupling", MODULE)
            require_hermitian(b, "coupling operator", module=MODULE)
            coupling_eig = eigenvectors.conj().T @ b @ eigenvectors
            coupling_eig = 0.5 * (coupling_eig + coupling_eig.conj().T)

        logger.log_computation("diagonalize", dimension=int(eigenvalues.size), residual=residual)
        return EigenSystem(eigenvalues=eigenvalues, eigenvectors=eigenvectors, coupling=coupling_eig, label=label)

    def from_spectrum(self, energies: np.ndarray, coupling: np.ndarray, label: str = "H") -> EigenSystem:
        """Eigensystem of a diagonal Hamiltonian given directly by its (sorted) spectrum"""
        energies = np.asarray(energies, dtype=float)
        require_finite(energies, "spectrum", MODULE)
        order = np.argsort(energies, kind="stable")
        b = np.asarray(coupling, dtype=complex)[np.ix_(order, order)]
        require_matching([energies.size, b.shape[0], b.shape[1]], "spectrum and coupling", MODULE)
        require_hermitian(b, "coupling operator", module=MODULE)
        return EigenSystem(
            eigenvalues=energies[order],
            eigenvectors=np.eye(energies.size, dtype=complex)[:, order],
            coupling=b,
            label=label,
        )

    def molecule_eigensystem(self, params: MoleculeParams, tail_tolerance: Optional[float] = None) -> EigenSystem:
        """Build H_E and B for one molecule and diagonalize"""
        modes = None
        n_max = None
        if params.n_modes > 0:
            modes = environment_service.discretize_spectral_density(params.r, params.omega_c, params.n_modes)
            n_max = environment_service.resolve_truncation(params, modes, tail_tolerance)
        hamiltonian = environment_service.build_single_molecule_hamiltonian(params, modes, n_max)
        coupling = environment_service.build_coupling_operator(hamiltonian)
        return self.diagonalize(hamiltonian, coupling, label="H_E")

    # Thermal state

    def thermal_weights(self, eig: EigenSystem, beta: Optional[float] = None, zero_temperature: bool = False) -> ThermalState:
        """eta_k = exp(-beta (eps_k - eps_0)) / sum, the ground-state-shifted form"""
        energies = eig.eigenvalues
        shifted = energies - energies[0]

        if zero_temperature:
            tolerance = self.degeneracy_tolerance(eig)
            ground = shifted < tolerance
            weights = ground.astype(float) / np.count_nonzero(ground)
            return ThermalState(
                weights=weights,
                beta=math.inf,
                log_partition_function=math.log(np.count_nonzero(ground)),
                zero_temperature=True,
            )

        if beta is None or not math.isfinite(beta) or beta < 0:
            raise ParameterError("beta must be finite and nonnegative", module=MODULE, beta=beta)

        boltzmann = np.exp(-beta * shifted)
        total = float(np.sum(boltzmann))
        weights = boltzmann / total
        return ThermalState(
            weights=weights,
            beta=float(beta),
            log_partition_function=-beta * float(energies[0]) + math.log(total),
        )

    # Correlation function

    def degeneracy_tolerance(self, eig: EigenSystem, tol_deg: Optional[float] = None) -> float:
        if tol_deg is not None:
            if not tol_deg > 0:
                raise ParameterError("degeneracy tolerance must be positive", module=MODULE, tol_deg=tol_deg)
            return float(tol_deg)
        span = eig.spectral_range
        return self.degeneracy_rtol * (span if span > 0 else 1.0)

    def _degenerate_clusters(self, energies: np.ndarray, tolerance: float) -> np.ndarray:
        """Cluster label per level; consecutive levels closer than tolerance share a label"""
        if energies.size == 0:
            return np.zeros(0, dtype=int)
        breaks = np.diff(energies) >= tolerance
        return np.concatenate(([0], np.cumsum(breaks)))

    def _check_pair(self, eig: EigenSystem, thermal: ThermalState) -> None:
        if eig.coupling is None:
            raise DimensionMismatchError("eigensystem carries no coupling operator", module=MODULE)
        if thermal.weights.size != eig.dimension:
            raise DimensionMismatchError(
                "thermal state and eigensystem have different dimensions",
                module=MODULE,
                weights=int(thermal.weights.size),
                dimension=eig.dimension,
            )

    def _pair_weights(
        self, eig: EigenSystem, thermal: ThermalState, renormalize: bool = True, tol_deg: Optional[float] = None
    ) -> Tuple[float, np.ndarray, np.ndarray, float, float]:
        """
        Split eta_k |B~_kl|^2 into the static part (same degenerate cluster) and
        oscillating (omega_kl, weight) pairs.
        """
        self._check_pair(eig, thermal)
        eta = thermal.weights
        b = eig.coupling.copy()
        diagonal = np.real(np.diag(b))
        mean = float(np.dot(eta, diagonal))
        if renormalize:
            b[np.diag_indices_from(b)] -= mean

        weights = eta[:, None] * np.abs(b) ** 2
        clusters = self._degenerate_clusters(eig.eigenvalues, self.degeneracy_tolerance(eig, tol_deg))
        static_mask = clusters[:, None] == clusters[None, :]
        static = float(np.sum(weights[static_mask]))

        total = float(np.sum(weights))
        frequencies = eig.transition_frequencies()[~static_mask]
        oscillating = weights[~static_mask]
        keep = oscillating > self.weight_cutoff * max(total, 1e-300)
        return static, frequencies[keep], oscillating[keep], mean, total

    def _slowest_frequency(self, frequencies: np.ndarray, weights: np.ndarray, total: float) -> Optional[float]:
        significant = weights > SIGNIFICANT_WEIGHT * max(total, 1e-300)
        if not np.any(significant):
            return None
        return float(np.min(np.abs(frequencies[significant])))

    def correlation_function(
        self,
        eig: EigenSystem,
        thermal: ThermalState,
        t_grid: Sequence[float],
        renormalize: bool = True,
        tol_deg: Optional[float] = None,
    ) -> CorrelationSeries:
        """
        C_B(t) = sum_{omega_kl != 0} eta_k |B~_kl|^2 exp(i omega_kl t) + C_0
        """
        times = np.asarray(t_grid, dtype=float)
        require_finite(times, "time grid", MODULE)
        static, frequencies, weights, mean, total = self._pair_weights(eig, thermal, renormalize, tol_deg)

        values = evaluate_pair_sum(times, frequencies, weights, static)

        logger.log_computation("correlation_function", pairs=int(frequencies.size), points=int(times.size))
        return CorrelationSeries(
            times=times,
            values=values,
            mean_coupling=mean,
            offset_estimate=static,
            slowest_frequency=self._slowest_frequency(frequencies, weights, total),
            renormalized=renormalize,
        )

    def default_time_grid(
        self,
        eig: EigenSystem,
        thermal: ThermalState,
        n_points: Optional[int] = None,
        t_max: Optional[float] = None,
        periods: Optional[float] = None,
    ) -> np.ndarray:
        """n_points spanning `periods` periods of the slowest nonzero frequency, capped at t_max"""
        n_points = n_points or settings.DEFAULT_TIME_POINTS
        cap = t_max or settings.MAX_TIME
        periods = periods or settings.DEFAULT_PERIODS
        _, frequencies, weights, _, total = self._pair_weights(eig, thermal)
        slowest = self._slowest_frequency(frequencies, weights, total)
        t_end = cap if slowest is None else min(cap, periods * 2 * np.pi / slowest)
        return np.linspace(0.0, t_end, n_points)

    def averaging_time_grid(
        self,
        eig: EigenSystem,
        thermal: ThermalState,
        spans: Optional[float] = None,
        max_points: Optional[int] = None,
    ) -> np.ndarray:
        """
        Grid on [0, spans / omega_min] with step pi / (2 omega_max) over the
        significant oscillating pairs, suitable for long_time_average.
        """
        spans = spans or settings.AVERAGING_SPANS
        max_points = max_points or settings.MAX_AVERAGING_POINTS
        _, frequencies, weights, _, total = self._pair_weights(eig, thermal)
        significant = weights > SIGNIFICANT_WEIGHT * max(total, 1e-300)
        if not np.any(significant):
            return np.linspace(0.0, 1.0, 64)

        omega = np.abs(frequencies[significant])
        step = np.pi / (2.0 * float(np.max(omega)))
        t_end = spans / float(np.min(omega))
        n_points = int(math.ceil(t_end / step)) + 1
        if n_points > max_points:
            logger.warning(
                "Averaging grid truncated",
                requested_points=n_points,
                max_points=max_points,
                slowest_frequency=float(np.min(omega)),
            )
            n_points = max_points
            t_end = step * (max_points - 1)
        return np.linspace(0.0, t_end, max(n_points, 64))

    # Offset

    def offset(self, eig: EigenSystem, thermal: ThermalState, tol_deg: Optional[float] = None) -> OffsetReport:
        """
        C_0 = sum eta_k (B^kk)^2 - (sum eta_k B^kk)^2 + d_0, evaluated in the
        variance form so that B -> B + c*1 leaves it unchanged.
        """
        self._check_pair(eig, thermal)
        tolerance = self.degeneracy_tolerance(eig, tol_deg)
        eta = thermal.weights
        diagonal = np.real(np.diag(eig.coupling))
        mean = float(np.dot(eta, diagonal))
        variance = float(np.dot(eta, (diagonal - mean) ** 2))

        clusters = self._degenerate_clusters(eig.eigenvalues, tolerance)
        degeneracy = 0.0
        pairs = 0
        for label in np.unique(clusters):
            members = np.flatnonzero(clusters == label)
            if members.size < 2:
                continue
            block = np.abs(eig.coupling[np.ix_(members, members)]) ** 2
            np.fill_diagonal(block, 0.0)
            degeneracy += float(np.dot(eta[members], block.sum(axis=1)))
            pairs += members.size * (members.size - 1) // 2

        report = OffsetReport(
            total=variance + degeneracy,
            variance_part=variance,
            degeneracy_part=degeneracy,
            degeneracy_tolerance=tolerance,
            degenerate_pairs=pairs,
        )
        logger.log_computation("offset", C0=report.total, degenerate_pairs=pairs)
        return report

    def long_time_average(self, series: CorrelationSeries, window_fraction: float = 0.5, taper: str = "hann") -> float:
        """Weighted mean of Re C_B over the trailing window_fraction of the grid"""
        if not 0 < window_fraction <= 1:
            raise ParameterError("window_fraction must lie in (0, 1]", module=MODULE, window_fraction=window_fraction)
        if taper not in ("hann", "none"):
            raise ParameterError("taper must be 'hann' or 'none'", module=MODULE, taper=taper)

        n = series.times.size
        start = min(n - 1, int(math.floor((1.0 - window_fraction) * n)))
        values = series.real[start:]
        span = float(series.times[-1] - series.times[start])

        if series.slowest_frequency and span * series.slowest_frequency < 100.0:
            logger.warning(
                "Averaging window shorter than 100 / slowest frequency",
                window=span,
                slowest_frequency=series.slowest_frequency,
            )

        if taper == "none" or values.size < 3:
            return float(np.mean(values))
        weights = windows.hann(values.size, sym=True)
        return float(np.dot(weights, values) / np.sum(weights))

    # Diagonal statistics

    def bkk_statistics(self, eig: EigenSystem, thermal: ThermalState, bins: int = 50) -> BkkDistribution:
        """(eps'_k, B^kk) pairs, histograms and the cumulative participation F_beta(N)"""
        self._check_pair(eig, thermal)
        shifted = eig.eigenvalues - eig.eigenvalues[0]
        top = float(np.max(shifted)) if shifted.size else 0.0
        rescaled = shifted / top if top > 0 else np.zeros_like(shifted)

        diagonal = np.real(np.diag(eig.coupling))
        eta = thermal.weights
        counts, edges = np.histogram(diagonal, bins=bins)
        thermal_counts, _ = np.histogram(diagonal, bins=edges, weights=eta)

        participation = np.cumsum(eta * diagonal ** 2)
        final = float(participation[-1]) if participation.size else 0.0
        threshold = settings.PARTICIPATION_THRESHOLD
        if final > 0:
            index = int(np.argmax(participation >= (1.0 - threshold) * final))
            participation_range = float(shifted[index])
        else:
            participation_range = 0.0

        return BkkDistribution(
            rescaled_energies=rescaled,
            diagonal=diagonal,
            weights=eta,
            histogram_counts=counts,
            histogram_edges=edges,
            thermal_histogram=thermal_counts,
            participation=participation,
            participation_range=participation_range,
            participation_threshold=threshold,
        )

    def davies_diagnostic(
        self,
        series: CorrelationSeries,
        epsilon_exp: float = 0.5,
        horizon: Optional[float] = None,
        n_horizons: int = 4,
    ) -> DaviesReport:
        """
        Partial integrals I(T) of |C(t)| (1 + t)^eps on T_max / 2^k horizons.

        CONVERGENT when the last doubling changes I by less than the tolerance,
        DIVERGENT when the fitted growth I ~ T^p has p above the exponent threshold.
        """
        if not epsilon_exp > 0:
            raise ParameterError("epsilon_exp must be positive", module=MODULE, epsilon_exp=epsilon_exp)
        times = series.times
        magnitude = np.abs(series.values)
        if horizon is not None:
            inside = times <= horizon
            times, magnitude = times[inside], magnitude[inside]
        if times.size < 8:
            raise ParameterError("series too short for the Davies diagnostic", module=MODULE, points=int(times.size))

        integrand = magnitude * (1.0 + np.abs(times)) ** epsilon_exp
        cumulative = cumulative_trapezoid(integrand, times, initial=0.0)
        t_end = float(times[-1])
        horizons = [t_end / 2 ** k for k in range(n_horizons - 1, -1, -1)]
        integrals = [float(np.interp(T, times, cumulative)) for T in horizons]

        last, previous = integrals[-1], integrals[-2]
        doubling_change = abs(last - previous) / abs(last) if last != 0 else 0.0

        growth = None
        positive = [(T, I) for T, I in zip(horizons, integrals) if I > 0 and T > 0]
        if len(positive) >= 2:
            fit = linregress(np.log([p[0] for p in positive]), np.log([p[1] for p in positive]))
            growth = float(fit.slope)

        tolerance = settings.DAVIES_DOUBLING_TOLERANCE
        exponent = settings.DAVIES_GROWTH_EXPONENT
        if doubling_change < tolerance:
            classification = DaviesClass.CONVERGENT
        elif growth is not None and growth > exponent:
            classification = DaviesClass.DIVERGENT
        else:
            classification = DaviesClass.INCONCLUSIVE

        return DaviesReport(
            classification=classification,
            epsilon_exp=epsilon_exp,
            horizons=horizons,
            integrals=integrals,
            doubling_change=doubling_change,
            growth_exponent=growth,
            thresholds={"doubling_tolerance": tolerance, "growth_exponent": exponent},
        )

    # Scans

    def offset_scan(
        self,
        base_params: MoleculeParams,
        betas: Sequence[float],
        rs: Sequence[float],
        jobs: Optional[int] = None,
        tail_tolerance: Optional[float] = None,
        tol_deg: Optional[float] = None,
    ) -> OffsetScan:
        """beta x r heatmap of offsets, parallel over grid cells"""
        betas = np.asarray(betas, dtype=float)
        rs = np.asarray(rs, dtype=float)
        cells = [(float(beta), float(r)) for beta in betas for r in rs]

        def run_cell(cell: Tuple[float, float]) -> OffsetReport:
            beta, r = cell
            params = base_params.model_copy(update={"beta": beta, "r": r})
            eig = self.molecule_eigensystem(params, tail_tolerance)
            thermal = self.thermal_weights(eig, beta)
            return self.offset(eig, thermal, tol_deg)

        reports = parallel_map(run_cell, cells, jobs, label="offset_scan")
        offsets = np.array([report.total for report in reports]).reshape(betas.size, rs.size)
        return OffsetScan(betas=betas, rs=rs, offsets=offsets, reports=reports)


# Global correlation service instance
correlation_service = CorrelationService()
