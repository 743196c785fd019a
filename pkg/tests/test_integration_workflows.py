"""
Integration tests for the end-to-end offset laboratory workflows
"""

import json
import math
from typing import Optional

import numpy as np
import pytest

from cli.main import run_command
from models.correlation import CorrelationSeries, DaviesClass
from models.dynamics import SystemSpec
from models.environment import MoleculeParams
from models.eth import DecayCheck, EthSpec
from models.fitting import DecayModelParams
from services.correlation_service import correlation_service
from services.dynamics_service import dynamics_service
from services.ensemble_service import ensemble_service
from services.environment_service import environment_service
from services.eth_service import eth_service
from services.fitting_service import fitting_service
from services.oracles_service import oracles_service

OFFSETS = [0.0, 0.05, 0.1, 0.3]


def molecule_series(params: MoleculeParams, times: np.ndarray, tail_tolerance: Optional[float] = None):
    eig = correlation_service.molecule_eigensystem(params, tail_tolerance)
    thermal = correlation_service.thermal_weights(eig, params.beta)
    return eig, thermal, correlation_service.correlation_function(eig, thermal, times)


@pytest.fixture(scope="function")
def coupled_four_level():
    """Four-level system with a dense random coupling, g = 0.3"""
    rng = np.random.default_rng(5)
    raw = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    hamiltonian = np.diag([0.0, 0.45, 0.95, 1.4]).astype(complex)
    return SystemSpec(hamiltonian=hamiltonian, coupling=0.5 * (raw + raw.conj().T), coupling_strength=0.3, label="four_level")


class TestOracleEquivalence:
    """Eigenbasis correlation against the closed forms"""

    def test_spin_coherence(self, spin_molecule):
        """Bare spin matches the r = 0 closed form and its offset"""
        times = np.linspace(0.0, 50.0, 2001)
        eig, thermal, series = molecule_series(spin_molecule, times)
        oracle = oracles_service.spin_coherence_correlation(1.0, 1.0, 1.0, times)
        assert np.max(np.abs(series.values - oracle.values)) < 1e-10
        assert correlation_service.offset(eig, thermal).total == pytest.approx(0.31464, abs=1e-5)

    @pytest.mark.parametrize("n_modes,epsilon", [(1, 1.0), (2, math.sqrt(2.0))])
    def test_pure_dephasing(self, n_modes, epsilon):
        """Delta = 0 with the displaced tail rule matches the polaron closed form"""
        params = MoleculeParams(epsilon=epsilon, delta=0.0, r=0.5, omega_c=1.0, n_modes=n_modes, beta=1.0)
        times = np.linspace(0.0, 20.0, 401)
        eig, thermal, series = molecule_series(params, times, tail_tolerance=1e-10)
        oracle = oracles_service.pure_dephasing_correlation(params, t_grid=times)
        assert np.max(np.abs(series.values - oracle.values)) < 1e-6
        assert correlation_service.offset(eig, thermal).total < 1e-12

    @pytest.mark.parametrize("n_modes,n_max,beta", [(1, 20, 1.0), (2, 12, 2.0), (3, 8, 3.0)])
    def test_harmonic_bath_has_no_offset(self, n_modes, n_max, beta):
        """Linear coupling to a truncated boson bath leaves C_0 = 0"""
        modes = environment_service.discretize_spectral_density(0.5, 1.0, n_modes)
        hamiltonian, coupling = environment_service.build_harmonic_bath(modes, n_max)
        eig = correlation_service.diagonalize(hamiltonian, coupling)
        thermal = correlation_service.thermal_weights(eig, beta)
        times = np.linspace(0.0, 10.0, 101)
        series = correlation_service.correlation_function(eig, thermal, times)
        oracle = oracles_service.harmonic_correlation(modes, beta, times)
        assert correlation_service.offset(eig, thermal).total < 1e-12
        assert np.max(np.abs(series.values - oracle.values)) < 1e-6


class TestOffsetProperties:
    """Offset value, long-time average and temperature dependence"""

    @pytest.mark.slow
    def test_offset_equals_long_time_average(self):
        """Closed-form offset and windowed average agree over a (beta, r) grid"""
        for beta in [1.0, 2.0, 3.0, 4.0, 5.0]:
            for r in [0.0, 0.25, 0.5, 0.75, 1.0]:
                params = MoleculeParams(epsilon=1.0, delta=1.0, r=r, n_modes=1, n_max=4, beta=beta)
                eig = correlation_service.molecule_eigensystem(params)
                thermal = correlation_service.thermal_weights(eig, beta)
                grid = correlation_service.averaging_time_grid(eig, thermal, spans=2000.0)
                average = correlation_service.long_time_average(correlation_service.correlation_function(eig, thermal, grid))
                offset = correlation_service.offset(eig, thermal).total
                assert abs(offset - average) < 1e-5, (beta, r, offset, average)

    def test_offset_vanishes_at_zero_temperature(self):
        """C_0 decreases strictly with beta and is negligible at beta = 50"""
        base = MoleculeParams(epsilon=1.0, delta=1.0, r=0.25, n_modes=1, n_max=6)
        scan = correlation_service.offset_scan(base, [1.0, 2.0, 5.0, 10.0, 50.0], [0.25])
        offsets = scan.offsets[:, 0]
        assert np.all(np.diff(offsets) < 0)
        assert offsets[-1] < 1e-3 * offsets[0]

    def test_davies_classifier(self):
        """e^{-t} is integrable with weight (1+t)^0.5, a constant is not"""
        times = np.linspace(0.0, 1000.0, 100001)
        decaying = correlation_service.davies_diagnostic(CorrelationSeries(times=times, values=np.exp(-times)), 0.5)
        constant = correlation_service.davies_diagnostic(CorrelationSeries(times=times, values=np.full(times.size, 0.3)), 0.5)
        assert decaying.classification is DaviesClass.CONVERGENT
        assert constant.classification is DaviesClass.DIVERGENT
        assert constant.growth_exponent == pytest.approx(1.5, abs=0.2)


class TestThermalization:
    """Steady states of the second-order master equations with and without an offset"""

    def test_secular_thermalizes_without_offset(self, qubit_system, coupled_four_level, ohmic_bath):
        """Two- and four-level systems reach Gibbs populations"""
        for system, t_max in ((qubit_system, 200.0), (coupled_four_level, 400.0)):
            p0 = np.zeros(system.dimension)
            p0[-1] = 1.0
            run = dynamics_service.secular_rate_equations(system, ohmic_bath, p0, t_max, 0.05)
            report = dynamics_service.steady_state_report(run, 1.0)
            assert report.gibbs_distance < 1e-4, system.label

    @pytest.mark.slow
    def test_offset_breaks_thermalization(self, qubit_system):
        """Gibbs distance and initial-state dependence grow with C_0"""
        distances, dependences = [], []
        for offset in OFFSETS:
            bath = dynamics_service.ohmic_bath(r=1.0, omega_c=1.0, beta=1.0, offset=offset)
            run = dynamics_service.secular_rate_equations(qubit_system, bath, [0.0, 1.0], 200.0, 0.05)
            report = dynamics_service.steady_state_report(run, 1.0)
            distances.append(report.gibbs_distance)
            dependences.append(report.initial_state_dependence)

        assert np.all(np.diff(distances) > 0), distances
        assert np.all(np.diff(dependences) > 0), dependences
        assert distances[-1] > 10 * max(distances[0], 1e-12)
        assert dependences[-1] > 10 * max(dependences[0], 1e-12)

    @pytest.mark.slow
    def test_time_local_and_convoluted_diverge(self, qubit_system):
        """Trajectory gap is zero without offset and grows with it"""
        rho0 = dynamics_service.initial_state(qubit_system)
        gaps = []
        for offset in OFFSETS:
            bath = dynamics_service.ohmic_bath(r=1.0, omega_c=1.0, beta=1.0, offset=offset)
            local = dynamics_service.evolve_time_local(qubit_system, bath, rho0, 20.0, 0.05)
            convoluted = dynamics_service.evolve_convoluted(qubit_system, bath, rho0, 20.0, 0.05)
            gaps.append(dynamics_service.trajectory_gap(local, convoluted).max_gap)

        assert gaps[0] < 1e-8
        assert np.all(np.diff(gaps) > 0), gaps


class TestEthSuppression:
    """Offsets of ETH environments shrink with the dimension"""

    @pytest.mark.slow
    def test_median_offset_decreases_with_dimension(self):
        """20-seed medians at dim 400 sit below dim 100; the dim-400 series decays"""
        spec = EthSpec(energy_width=5.0, band=10.0)
        study = eth_service.offset_study([100, 400], list(range(20)), spec)
        medians = study.medians()
        assert medians[400] < medians[100]

        environment = eth_service.generate_eth_environment(spec.model_copy(update={"dim": 400}))
        series = eth_service.eth_correlation(environment, np.linspace(0.0, 5.0, 501))
        assert eth_service.verify_polynomial_decay(series, 1).status is DecayCheck.PASS


class TestDecayModelRecovery:
    """Decay-model extraction on synthetic data"""

    @pytest.mark.slow
    def test_noisy_recovery_over_seeds(self, synthetic_decay_params):
        """sigma = 1e-3 noise keeps every parameter within 1% for ten seeds"""
        truth = DecayModelParams(**synthetic_decay_params)
        times = np.linspace(0.0, 250.0, 10001)
        clean = oracles_service.evaluate_decay_models(truth, times)
        for seed in range(10):
            noisy = clean + np.random.default_rng(seed).normal(0.0, 1e-3, size=times.size)
            fitted = fitting_service.fit_correlation(noisy, times).parameters
            for name in ["A0", "omega0", "B0", "a", "C0_tilde", "T0"]:
                error = abs(getattr(fitted, name) - getattr(truth, name)) / abs(getattr(truth, name))
                assert error < 1e-2, (seed, name, error)

    def test_plateau_matches_eigenbasis_offset(self, spin_molecule):
        """An infinite-T0 series recovers C_0 of the bare spin"""
        eig = correlation_service.molecule_eigensystem(spin_molecule)
        offset = correlation_service.offset(eig, correlation_service.thermal_weights(eig, 1.0)).total
        truth = DecayModelParams(A0=0.5, omega0=2.7, B0=0.3, a=1.41421, C0_tilde=offset, T0=None)
        times = np.linspace(0.0, 250.0, 10001)
        result = fitting_service.fit_correlation(oracles_service.evaluate_decay_models(truth, times), times)
        assert result.infinite_T0
        assert result.parameters.C0_tilde == pytest.approx(offset, rel=0.02)


class TestOneOverFNoise:
    """Lorentzian mixtures with a 1/nu rate density"""

    def test_slope_extends_to_zero_frequency(self):
        """Slope -1 across the band and no flattening with a static component"""
        rates = ensemble_service.sample_relaxation_rates(2000, 1e-4, 1.0, seed=0)
        table = np.vstack((np.column_stack((np.ones_like(rates), rates)), [[5.0, 0.0]]))
        chi = ensemble_service.susceptibility(table, np.logspace(-4, 0, 200))
        slope = ensemble_service.loglog_slope(chi, (1e-3, 1e-1))
        lowest = ensemble_service.band_flattening(chi, 1.0, low=1e-3)
        assert -1.1 <= slope.slope <= -0.9
        assert -1.1 <= lowest.slope <= -0.9


class TestMoleculePlateaus:
    """Damped oscillation and plateau of a three-mode molecule"""

    def test_tunneling_sets_the_plateau(self):
        """Delta = 2.5 settles on a plateau; Delta = 0 averages to zero"""
        times = np.linspace(0.0, 200.0, 4001)
        plateaus, offsets = {}, {}
        for delta in (0.0, 2.5):
            params = MoleculeParams(epsilon=1.0, delta=delta, r=0.25, n_modes=3, n_max=4, beta=1.0)
            eig, thermal, series = molecule_series(params, times)
            plateaus[delta] = correlation_service.long_time_average(series)
            offsets[delta] = correlation_service.offset(eig, thermal).total
            assert series.values[0].real > plateaus[delta]

        assert plateaus[2.5] > 0.05
        assert offsets[2.5] > 0.05
        assert abs(plateaus[0.0]) < 0.01
        assert offsets[0.0] < 1e-10
        assert plateaus[0.0] < plateaus[2.5]


class TestCommandLineRuns:
    """Complete runs through run_command"""

    def test_offset_scan_run(self, write_config, output_dir):
        """The heatmap table holds one row per (beta, r) cell"""
        path = write_config("n_modes = 1\nn_max = 4\nbetas = 1, 2\nrs = 0, 0.5\n")
        assert run_command(["offset-scan", "--config", str(path), "--out", str(output_dir), "--jobs", "2"]) == 0
        table = json.loads((output_dir / "offset_scan_table.json").read_text())
        assert len(table["data"]["C0"]) == 4

    def test_oracle_run(self, write_config, output_dir):
        """The harmonic oracle reports its detailed-balance residual"""
        path = write_config("kind = harmonic\nn_modes = 2\nr = 0.5\nbeta = 2\nn_points = 11\n")
        assert run_command(["oracle", "--config", str(path), "--out", str(output_dir)]) == 0
        report = json.loads((output_dir / "oracle.json").read_text())
        assert report["detailed_balance_residual"] < 1e-12
        assert report["schema_version"] == "1.0"
