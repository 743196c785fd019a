"""
Unit tests for the eigenbasis correlation service
"""

import math

import numpy as np
import pytest

from models.correlation import CorrelationSeries, DaviesClass, ThermalState
from models.environment import MoleculeParams
from services.correlation_service import correlation_service, evaluate_pair_sum
from services.oracles_service import oracles_service
from utils.errors import DimensionMismatchError, HermiticityError, ParameterError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SPIN_OFFSET = 0.31464


class TestDiagonalization:
    """Test cases for the Hermitian eigendecomposition"""

    def test_eigenvalues_sorted(self, spin_molecule):
        """Two-level spectrum is -W/2, +W/2"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        np.testing.assert_allclose(eig.eigenvalues, [-math.sqrt(2) / 2, math.sqrt(2) / 2], atol=1e-14)

    def test_rejects_non_hermitian(self):
        """Anti-Hermitian part beyond the tolerance raises"""
        with pytest.raises(HermiticityError):
            correlation_service.diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]), SIGMA_X)

    def test_rejects_mismatched_coupling(self):
        """H and B must share the dimension"""
        with pytest.raises(DimensionMismatchError):
            correlation_service.diagonalize(np.eye(3), SIGMA_X)

    def test_from_spectrum_sorts(self):
        """Unsorted spectra are reordered together with the coupling"""
        coupling = np.array([[1.0, 0.2], [0.2, -1.0]])
        eig = correlation_service.from_spectrum(np.array([2.0, 1.0]), coupling)
        np.testing.assert_allclose(eig.eigenvalues, [1.0, 2.0])
        np.testing.assert_allclose(np.diag(eig.coupling).real, [-1.0, 1.0])


class TestThermalWeights:
    """Test cases for the thermal state"""

    def test_weights_normalized(self, single_mode_molecule):
        """eta_k sums to one and decreases with energy"""
        eig = correlation_service.molecule_eigensystem(single_mode_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        assert thermal.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(np.diff(thermal.weights) <= 1e-15)

    def test_large_beta_stays_finite(self, spin_molecule):
        """Ground-shifted weights survive beta * energy far beyond overflow"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 5000.0)
        np.testing.assert_allclose(thermal.weights, [1.0, 0.0])
        assert math.isfinite(thermal.log_partition_function)

    def test_zero_temperature(self, spin_molecule):
        """Zero temperature puts all weight on the ground state"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, zero_temperature=True)
        assert thermal.zero_temperature
        np.testing.assert_allclose(thermal.weights, [1.0, 0.0])

    def test_negative_beta_rejected(self, spin_molecule):
        """beta < 0 raises"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        with pytest.raises(ParameterError):
            correlation_service.thermal_weights(eig, -1.0)


class TestCorrelationFunction:
    """Test cases for the eigensum correlation function"""

    def test_spin_coherence_equivalence(self, spin_molecule):
        """L = 0, r = 0 matches the closed form to 1e-10 on [0, 50]"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        times = np.linspace(0.0, 50.0, 2001)
        series = correlation_service.correlation_function(eig, thermal, times)
        oracle = oracles_service.spin_coherence_correlation(1.0, 1.0, 1.0, times)
        assert np.max(np.abs(series.values - oracle.values)) < 1e-10
        assert series.offset_estimate == pytest.approx(SPIN_OFFSET, abs=1e-5)

    def test_initial_value_is_variance(self, spin_molecule):
        """C(0) = <B^2> - <B>^2"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        series = correlation_service.correlation_function(eig, thermal, [0.0])
        mean = (1.0 / math.sqrt(2)) * math.tanh(math.sqrt(2) / 2)
        assert series.values[0].real == pytest.approx(1.0 - mean ** 2, abs=1e-12)
        assert series.mean_coupling == pytest.approx(mean, abs=1e-12)

    def test_hermitian_symmetry(self, single_mode_molecule):
        """C(-t) = conj C(t)"""
        eig = correlation_service.molecule_eigensystem(single_mode_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        times = np.linspace(0.0, 5.0, 11)
        forward = correlation_service.correlation_function(eig, thermal, times)
        backward = correlation_service.correlation_function(eig, thermal, -times)
        np.testing.assert_allclose(backward.values, np.conj(forward.values), atol=1e-12)

    def test_raw_operator_limit(self, single_mode_molecule):
        """Without renormalization the static part is <B>^2 + C_0"""
        eig = correlation_service.molecule_eigensystem(single_mode_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        raw = correlation_service.correlation_function(eig, thermal, [0.0], renormalize=False)
        offset = correlation_service.offset(eig, thermal).total
        assert not raw.renormalized
        assert raw.offset_estimate == pytest.approx(raw.mean_coupling ** 2 + offset, abs=1e-12)

    def test_degenerate_spectrum(self):
        """Exact degeneracy routes off-diagonal weight into the offset"""
        eig = correlation_service.diagonalize(np.zeros((2, 2)), SIGMA_X)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        series = correlation_service.correlation_function(eig, thermal, np.linspace(0.0, 10.0, 5))
        report = correlation_service.offset(eig, thermal)
        np.testing.assert_allclose(series.values, 1.0, atol=1e-12)
        assert report.total == pytest.approx(1.0, abs=1e-12)
        assert report.degenerate_pairs == 1

    def test_shift_invariance(self, single_mode_molecule):
        """B -> B + c 1 leaves C_0 unchanged"""
        eig = correlation_service.molecule_eigensystem(single_mode_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        shifted = correlation_service.from_spectrum(eig.eigenvalues, eig.coupling + 3.0 * np.eye(eig.dimension))
        first = correlation_service.offset(eig, thermal).total
        second = correlation_service.offset(shifted, thermal).total
        assert second == pytest.approx(first, abs=1e-12)

    def test_mismatched_thermal_state(self, spin_molecule):
        """Thermal weights must match the eigensystem"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = ThermalState(weights=np.ones(3) / 3, beta=1.0, log_partition_function=0.0)
        with pytest.raises(DimensionMismatchError):
            correlation_service.correlation_function(eig, thermal, [0.0])

    def test_pair_sum_chunks(self):
        """Blocked evaluation agrees with the direct sum"""
        times = np.linspace(0.0, 3.0, 7)
        frequencies = np.array([0.5, -1.5, 2.0])
        weights = np.array([0.2, 0.3, 0.1])
        direct = 0.4 + np.exp(1j * np.outer(times, frequencies)) @ weights
        np.testing.assert_allclose(evaluate_pair_sum(times, frequencies, weights, 0.4), direct)

    def test_default_grid_spans_periods(self, spin_molecule):
        """Twenty periods of the slowest frequency by default"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        grid = correlation_service.default_time_grid(eig, thermal, n_points=256)
        assert grid.size == 256
        assert grid[-1] == pytest.approx(20 * 2 * math.pi / math.sqrt(2))


class TestOffset:
    """Test cases for the offset and its long-time average"""

    def test_spin_offset_value(self, spin_molecule):
        """(Delta^2/W^2) sech^2(beta W/2) at epsilon = Delta = beta = 1"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        report = correlation_service.offset(eig, thermal)
        assert report.total == pytest.approx(SPIN_OFFSET, abs=1e-5)
        assert report.degeneracy_part == 0.0

    def test_long_time_average_matches_offset(self, spin_molecule):
        """Hann-weighted average over the averaging grid recovers C_0"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        grid = correlation_service.averaging_time_grid(eig, thermal, spans=2000.0)
        series = correlation_service.correlation_function(eig, thermal, grid)
        average = correlation_service.long_time_average(series)
        assert average == pytest.approx(correlation_service.offset(eig, thermal).total, abs=1e-5)

    def test_constant_series_average(self):
        """Both tapers return the constant"""
        series = CorrelationSeries(times=np.linspace(0.0, 10.0, 101), values=np.full(101, 0.3))
        assert correlation_service.long_time_average(series, taper="none") == pytest.approx(0.3)
        assert correlation_service.long_time_average(series, taper="hann") == pytest.approx(0.3)

    def test_invalid_window(self):
        """window_fraction outside (0, 1] raises"""
        series = CorrelationSeries(times=np.linspace(0.0, 1.0, 8), values=np.zeros(8))
        with pytest.raises(ParameterError):
            correlation_service.long_time_average(series, window_fraction=0.0)

    def test_offset_scan_matches_cells(self):
        """Scan cells agree with direct evaluation"""
        base = MoleculeParams(epsilon=1.0, delta=1.0, n_modes=1, n_max=3, r=0.0, beta=1.0)
        scan = correlation_service.offset_scan(base, [0.5, 2.0], [0.0, 0.5], jobs=2)
        assert scan.offsets.shape == (2, 2)
        params = base.model_copy(update={"beta": 2.0, "r": 0.5})
        eig = correlation_service.molecule_eigensystem(params)
        thermal = correlation_service.thermal_weights(eig, 2.0)
        assert scan.offsets[1, 1] == pytest.approx(correlation_service.offset(eig, thermal).total, abs=1e-12)
        assert list(scan.to_frame().columns[:2]) == ["beta", "r"]


class TestBkkStatistics:
    """Test cases for the eigenstate diagonal statistics"""

    def test_participation_total(self, single_mode_molecule):
        """F_beta at the top of the spectrum is sum eta_k (B^kk)^2"""
        eig = correlation_service.molecule_eigensystem(single_mode_molecule)
        thermal = correlation_service.thermal_weights(eig, 1.0)
        distribution = correlation_service.bkk_statistics(eig, thermal, bins=10)
        diagonal = np.real(np.diag(eig.coupling))
        assert distribution.participation[-1] == pytest.approx(np.dot(thermal.weights, diagonal ** 2))
        assert distribution.rescaled_energies[0] == 0.0
        assert distribution.rescaled_energies[-1] == pytest.approx(1.0)
        assert distribution.histogram_counts.sum() == eig.dimension
        assert distribution.thermal_histogram.sum() == pytest.approx(1.0)


class TestDaviesDiagnostic:
    """Test cases for the Davies integrability classifier"""

    def test_exponential_is_convergent(self):
        """e^{-t} has a finite weighted integral"""
        times = np.linspace(0.0, 1000.0, 100001)
        series = CorrelationSeries(times=times, values=np.exp(-times))
        report = correlation_service.davies_diagnostic(series, 0.5)
        assert report.classification is DaviesClass.CONVERGENT

    def test_constant_is_divergent(self):
        """A constant offset grows like T^{1 + eps}"""
        times = np.linspace(0.0, 1000.0, 100001)
        series = CorrelationSeries(times=times, values=np.full(times.size, 0.3))
        report = correlation_service.davies_diagnostic(series, 0.5)
        assert report.classification is DaviesClass.DIVERGENT
        assert report.growth_exponent == pytest.approx(1.5, abs=0.2)

    def test_rejects_nonpositive_exponent(self):
        """epsilon must be positive"""
        series = CorrelationSeries(times=np.linspace(0.0, 10.0, 64), values=np.ones(64))
        with pytest.raises(ParameterError):
            correlation_service.davies_diagnostic(series, 0.0)
