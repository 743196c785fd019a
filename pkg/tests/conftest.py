"""
Pytest configuration and fixtures for OffsetLab testing
"""

import os
from pathlib import Path
from typing import Callable, Dict, Any

import numpy as np
import pytest
from click.testing import CliRunner

os.environ.setdefault("ENVIRONMENT", "testing")
os.environ.setdefault("LOG_LEVEL", "WARNING")

from models.dynamics import SystemSpec
from models.environment import MoleculeParams
from services.dynamics_service import dynamics_service
from services.environment_service import environment_service
from utils.config import Settings

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@pytest.fixture(scope="function")
def test_settings():
    """Test configuration settings"""
    return Settings(
        ENVIRONMENT="testing",
        LOG_LEVEL="WARNING",
        MAX_DIMENSION=4096,
        OUTPUT_DIR="/tmp/offsetlab_test_results",
    )


@pytest.fixture(scope="function")
def spin_molecule():
    """Bare two-level molecule (L = 0, r = 0) with epsilon = Delta = beta = 1"""
    return MoleculeParams(epsilon=1.0, delta=1.0, r=0.0, n_modes=0, beta=1.0)


@pytest.fixture(scope="function")
def single_mode_molecule():
    """Epsilon = Delta = 1 molecule with one vibrational mode"""
    return MoleculeParams(epsilon=1.0, delta=1.0, r=0.25, omega_c=1.0, n_modes=1, n_max=6, beta=1.0)


@pytest.fixture(scope="function")
def dephasing_molecule():
    """Delta = 0 molecule coupled to one mode, the polaron-solvable limit"""
    return MoleculeParams(epsilon=1.0, delta=0.0, r=0.5, omega_c=1.0, n_modes=1, beta=1.0)


@pytest.fixture(scope="function")
def two_modes():
    """Two-mode Ohmic discretization"""
    return environment_service.discretize_spectral_density(0.5, 1.0, 2)


@pytest.fixture(scope="function")
def qubit_system():
    """H_S = sigma_z / 2 coupled through sigma_x with g = 0.3"""
    return SystemSpec(hamiltonian=0.5 * SIGMA_Z, coupling=SIGMA_X, coupling_strength=0.3, label="qubit")


@pytest.fixture(scope="function")
def ohmic_bath():
    """Continuum Ohmic bath r = 1, omega_c = 1, beta = 1 without offset"""
    return dynamics_service.ohmic_bath(r=1.0, omega_c=1.0, beta=1.0)


@pytest.fixture(scope="function")
def four_level_system():
    """Four-level system with incommensurate gaps and a seeded random Hermitian coupling"""
    rng = np.random.default_rng(11)
    raw = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    coupling = 0.5 * (raw + raw.conj().T)
    hamiltonian = np.diag([0.0, 0.45, 0.95, 1.4]).astype(complex)
    return SystemSpec(hamiltonian=hamiltonian, coupling=coupling, coupling_strength=0.1, label="four_level")


@pytest.fixture(scope="function")
def output_dir(tmp_path) -> Path:
    """Temporary directory for run artifacts"""
    directory = tmp_path / "results"
    directory.mkdir()
    return directory


@pytest.fixture(scope="function")
def cli_runner():
    """Click test runner"""
    return CliRunner()


@pytest.fixture(scope="function")
def write_config(tmp_path) -> Callable[[str, str], Path]:
    """Factory writing a configuration file into the temporary directory"""

    def _write(text: str, name: str = "experiment.cfg") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="function")
def synthetic_decay_params() -> Dict[str, Any]:
    """Decay-model parameters used by the fit recovery checks"""
    return {"A0": 0.5, "omega0": 2.7, "B0": 0.3, "a": 1.41421, "C0_tilde": 0.31, "T0": 50.0}
