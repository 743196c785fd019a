"""
Unit tests for the closed-form oracle service
"""

import math

import numpy as np
import pytest

from models.environment import MoleculeParams
from models.fitting import DecayModelParams, WeakCouplingModelParams
from services.correlation_service import correlation_service
from services.environment_service import environment_service
from services.oracles_service import oracles_service
from utils.errors import ParameterError


class TestThermalHelpers:
    """Test cases for Bose-Einstein occupation and the dephasing exponent"""

    def test_bose_einstein_value(self):
        """N(1) at beta = 1"""
        assert float(oracles_service.bose_einstein(1.0, 1.0)) == pytest.approx(1.0 / (math.e - 1.0))

    def test_bose_einstein_rejects_zero_frequency(self):
        """omega = 0 is singular"""
        with pytest.raises(ParameterError):
            oracles_service.bose_einstein(np.array([0.0, 1.0]), 1.0)

    def test_bose_einstein_rejects_infinite_temperature(self):
        """beta = 0 is singular"""
        with pytest.raises(ParameterError):
            oracles_service.bose_einstein(1.0, 0.0)

    def test_detailed_balance(self, two_modes):
        """(N+1) e^{-beta w} = N for every mode"""
        assert oracles_service.detailed_balance_residual(two_modes, 1.3) < 1e-14

    def test_dephasing_exponent_starts_at_zero(self, two_modes):
        """Gamma(0) = 0 and Gamma >= 0"""
        gamma = oracles_service.dephasing_exponent(two_modes, 1.0, np.linspace(0.0, 10.0, 50))
        assert gamma[0] == 0.0
        assert np.all(gamma >= 0.0)


class TestCorrelationOracles:
    """Test cases for the closed-form correlation functions against the eigensum"""

    def test_spin_coherence_offset(self):
        """epsilon = Delta = beta = 1 offset and initial value"""
        series = oracles_service.spin_coherence_correlation(1.0, 1.0, 1.0, [0.0])
        assert series.offset_estimate == pytest.approx(0.31464, abs=1e-5)
        assert series.values[0].real == pytest.approx(0.81464, abs=1e-5)

    def test_spin_coherence_high_temperature_stable(self):
        """Large beta leaves a finite, vanishing offset"""
        series = oracles_service.spin_coherence_correlation(1.0, 1.0, 2000.0, [0.0, 1.0])
        assert np.all(np.isfinite(series.values))
        assert series.offset_estimate == pytest.approx(0.0, abs=1e-300)

    def test_spin_coherence_singular(self):
        """epsilon = Delta = 0 is rejected"""
        with pytest.raises(ParameterError):
            oracles_service.spin_coherence_correlation(0.0, 0.0, 1.0, [0.0])

    def test_pure_dephasing_matches_eigensum(self, dephasing_molecule):
        """Delta = 0 closed form against exact diagonalization"""
        params = dephasing_molecule.model_copy(update={"n_max": 12})
        times = np.linspace(0.0, 20.0, 201)
        eig = correlation_service.molecule_eigensystem(params)
        thermal = correlation_service.thermal_weights(eig, params.beta)
        series = correlation_service.correlation_function(eig, thermal, times)
        oracle = oracles_service.pure_dephasing_correlation(params, t_grid=times)
        assert np.max(np.abs(series.values - oracle.values)) < 1e-6

    def test_pure_dephasing_requires_zero_delta(self, single_mode_molecule):
        """Delta != 0 is rejected"""
        with pytest.raises(ParameterError):
            oracles_service.pure_dephasing_correlation(single_mode_molecule, t_grid=[0.0])

    def test_pure_dephasing_without_modes(self):
        """L = 0 leaves the bare spin prefactor with |C| = 1"""
        params = MoleculeParams(epsilon=1.0, delta=0.0, r=0.0, n_modes=0, beta=1.0)
        series = oracles_service.pure_dephasing_correlation(params, t_grid=[0.0, 1.0])
        assert series.values[0] == pytest.approx(1.0)

    def test_harmonic_matches_eigensum(self, two_modes):
        """Harmonic bath closed form against the truncated Fock eigensum"""
        beta = 2.0
        hamiltonian, coupling = environment_service.build_harmonic_bath(two_modes, 12)
        eig = correlation_service.diagonalize(hamiltonian, coupling)
        thermal = correlation_service.thermal_weights(eig, beta)
        times = np.linspace(0.0, 10.0, 101)
        series = correlation_service.correlation_function(eig, thermal, times)
        oracle = oracles_service.harmonic_correlation(two_modes, beta, times)
        assert np.max(np.abs(series.values - oracle.values)) < 1e-6
        assert oracle.offset_estimate == 0.0


class TestGoldenRule:
    """Test cases for the Ohmic half-Fourier transform"""

    def test_rates_obey_kms(self):
        """gamma(w) / gamma(-w) = exp(beta w) inside the band"""
        omega = np.array([0.3, 1.0, 1.7])
        gamma_plus, _ = oracles_service.ohmic_half_fourier(omega, 1.0, 1.0, 1.5)
        gamma_minus, _ = oracles_service.ohmic_half_fourier(-omega, 1.0, 1.0, 1.5)
        np.testing.assert_allclose(gamma_plus / gamma_minus, np.exp(1.5 * omega), rtol=1e-12)

    def test_zero_frequency_limit(self):
        """gamma(0) = pi r^2 / (beta w_c)"""
        gamma, sigma = oracles_service.ohmic_half_fourier(0.0, 0.5, 1.0, 2.0)
        assert gamma[0] == pytest.approx(math.pi * 0.25 / 2.0)
        assert np.isfinite(sigma[0])

    def test_rates_vanish_outside_band(self):
        """No emission beyond the hard cutoff"""
        gamma, _ = oracles_service.ohmic_half_fourier(3.0, 1.0, 1.0, 1.0)
        assert gamma[0] == 0.0


class TestDecayModels:
    """Test cases for the decay-model evaluation"""

    def test_decay_model_initial_value(self, synthetic_decay_params):
        """f(0) = A0 + C~0"""
        params = DecayModelParams(**synthetic_decay_params)
        values = oracles_service.evaluate_decay_models(params, [0.0, 1e6])
        assert values[0] == pytest.approx(0.81)
        assert values[1] == pytest.approx(0.0, abs=1e-12)

    def test_infinite_relaxation_time(self):
        """T0 = None keeps a constant tail"""
        params = DecayModelParams(A0=0.5, omega0=1.0, B0=1.0, a=2.0, C0_tilde=0.2, T0=None)
        values = oracles_service.evaluate_decay_models(params, [100.0])
        assert values[0] == pytest.approx(0.2)

    def test_infinite_T0_normalized(self):
        """T0 = inf is stored as None"""
        assert DecayModelParams(T0=math.inf).T0 is None

    def test_weak_coupling_form(self):
        """Constant term survives at long times"""
        params = WeakCouplingModelParams(amplitude=1.0, damping=0.5, frequency=1.0, offset=0.3, offset_rate=0.1, const=0.05)
        values = oracles_service.evaluate_decay_models(params, [0.0, 1e4])
        assert values[0] == pytest.approx(1.35)
        assert values[1] == pytest.approx(0.05)

    def test_rejects_unknown_model(self):
        """Only the two model types evaluate"""
        with pytest.raises(ParameterError):
            oracles_service.evaluate_decay_models({"A0": 1.0}, [0.0])
