"""
Experiment Workflows Service
One pipeline per command-line experiment. Each pipeline turns a validated
ExperimentConfig into named tables (pandas frames) and JSON-able reports.
"""

from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Type
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from models.correlation import CorrelationSeries
from models.dynamics import IntegratorVariant, SystemSpec
from models.ensemble import EnsembleSpec
from models.environment import MoleculeParams
from models.eth import EthSpec
from models.experiment import (
    BkkStatsConfig,
    CorrelationConfig,
    DaviesConfig,
    EnsembleConfig,
    EthDemoConfig,
    ExperimentConfig,
    FitConfig,
    MasterEqConfig,
    OffsetScanConfig,
    OracleConfig,
)
from models.fitting import DecayModelParams
from services.correlation_service import correlation_service
from services.dynamics_service import dynamics_service
from services.ensemble_service import ensemble_service
from services.environment_service import environment_service
from services.eth_service import eth_service
from services.fitting_service import fitting_service
from services.oracles_service import oracles_service
from utils.errors import ConfigurationError, LabError, ParameterError
from utils.logging import get_logger

logger = get_logger(__name__)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
COUPLINGS = {"sigma_x": SIGMA_X, "sigma_z": SIGMA_Z, "sigma_x_plus_z": SIGMA_X + SIGMA_Z}


@dataclass
class WorkflowExecution:
    """Outcome of one experiment pipeline"""

    command: str
    execution_id: str
    status: str
    start_time: datetime
    end_time: Optional[datetime] = None
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    reports: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    error_message: Optional[str] = None

    @property
    def duration(self) -> Optional[float]:
        if self.end_time is None:
            return None
        return (self.end_time - self.start_time).total_seconds()


def _build(model: Type[BaseModel], **values) -> BaseModel:
    """Instantiate a parameter model, reporting the first failure as '<key>: <reason>'"""
    try:
        return model(**values)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else model.__name__
        raise ParameterError(f"{key}: {error['msg']}", module="cli", key=key)


def _read_series(path: str, column: str) -> Tuple[np.ndarray, np.ndarray]:
    """t and one value column from a CSV artifact; im_ partner columns are picked up when present"""
    csv_path = Path(path)
    if not csv_path.is_file():
        raise ConfigurationError(f"input: file not found {path}", key="input")
    frame = pd.read_csv(csv_path)
    for name in ("t", column):
        if name not in frame.columns:
            raise ConfigurationError(f"input: column '{name}' missing from {path}", key="input")
    values = frame[column].to_numpy(dtype=float)
    partner = "im_" + column[3:] if column.startswith("re_") else None
    if partner and partner in frame.columns:
        values = values + 1j * frame[partner].to_numpy(dtype=float)
    return frame["t"].to_numpy(dtype=float), values


class ExperimentWorkflowsService:
    """Service running the command-line experiment pipelines"""

    def __init__(self):
        self.workflows: Dict[str, Callable[[ExperimentConfig], Tuple[Dict[str, pd.DataFrame], Dict[str, Any]]]] = {
            "correlation": self._correlation,
            "offset-scan": self._offset_scan,
            "bkk-stats": self._bkk_stats,
            "oracle": self._oracle,
            "eth-demo": self._eth_demo,
            "master-eq": self._master_eq,
            "ensemble": self._ensemble,
            "fit": self._fit,
            "davies": self._davies,
        }

    def execute(self, command: str, config: ExperimentConfig) -> WorkflowExecution:
        """Run one pipeline; LabErrors are logged and propagate to the caller"""
        if command not in self.workflows:
            raise ConfigurationError(f"unknown command '{command}'", key="command")

        execution = WorkflowExecution(
            command=command,
            execution_id=f"{command}_seed{config.seed}",
            status="running",
            start_time=datetime.now(),
        )
        logger.info("Workflow started", command=command, seed=config.seed)
        try:
            execution.tables, execution.reports = self.workflows[command](config)
        except LabError as e:
            execution.status = "failed"
            execution.error_message = e.message
            logger.log_error(e, {"command": command})
            raise
        execution.end_time = datetime.now()
        execution.status = "completed"
        logger.info("Workflow completed", command=command, seconds=execution.duration, tables=sorted(execution.tables))
        return execution

    # Single molecule

    def _molecule(self, config) -> MoleculeParams:
        return _build(MoleculeParams, **config.molecule())

    def _correlation(self, config: CorrelationConfig):
        params = self._molecule(config)
        eig = correlation_service.molecule_eigensystem(params, config.tail_tolerance)
        thermal = correlation_service.thermal_weights(eig, params.beta)

        grid = correlation_service.default_time_grid(eig, thermal, config.n_points, config.t_max)
        series = correlation_service.correlation_function(
            eig, thermal, grid, renormalize=config.renormalize, tol_deg=config.degeneracy_tolerance
        )
        offset = correlation_service.offset(eig, thermal, config.degeneracy_tolerance)

        long_grid = correlation_service.averaging_time_grid(eig, thermal)
        long_series = correlation_service.correlation_function(
            eig, thermal, long_grid, renormalize=config.renormalize, tol_deg=config.degeneracy_tolerance
        )
        average = correlation_service.long_time_average(long_series, config.window_fraction)

        frame = series.to_frame()
        frame["long_time_average"] = average
        report = {
            "molecule": params.to_dict(),
            "eigensystem": eig.to_dict(),
            "thermal": thermal.to_dict(),
            "series": series.to_dict(),
            "offset": offset.to_dict(),
            "long_time_average": average,
            "averaging_grid": {"points": int(long_grid.size), "t_max": float(long_grid[-1])},
        }
        return {"correlation": frame}, {"correlation": report}

    def _offset_scan(self, config: OffsetScanConfig):
        base = _build(
            MoleculeParams,
            epsilon=config.epsilon,
            delta=config.delta,
            omega_c=config.omega_c,
            n_modes=config.n_modes,
            n_max=config.n_max,
            r=config.rs[0],
            beta=config.betas[0],
        )
        for key, values, upper in (("betas", config.betas, math.inf), ("rs", config.rs, 1.0)):
            if any(not 0 <= v <= upper for v in values):
                raise ParameterError(f"{key}: values outside [0, {upper}]", module="cli", key=key)
        scan = correlation_service.offset_scan(base, config.betas, config.rs, config.jobs, config.tail_tolerance)
        return {"offset_scan": scan.to_frame()}, {"offset_scan": scan.to_dict()}

    def _bkk_stats(self, config: BkkStatsConfig):
        params = self._molecule(config)
        eig = correlation_service.molecule_eigensystem(params, config.tail_tolerance)
        thermal = correlation_service.thermal_weights(eig, params.beta)
        distribution = correlation_service.bkk_statistics(eig, thermal, config.bins)
        tables = {"bkk": distribution.to_frame(), "bkk_histogram": distribution.histogram_frame()}
        return tables, {"bkk_stats": {"molecule": params.to_dict(), **distribution.to_dict()}}

    def _oracle(self, config: OracleConfig):
        times = np.linspace(0.0, config.t_max, config.n_points)
        report: Dict[str, Any] = {"kind": config.kind}
        if config.kind == "spin_coherence":
            series = oracles_service.spin_coherence_correlation(config.epsilon, config.delta, config.beta, times)
        elif config.kind == "pure_dephasing":
            series = oracles_service.pure_dephasing_correlation(self._molecule(config), t_grid=times)
        else:
            if config.n_modes < 1:
                raise ParameterError("harmonic oracle needs n_modes >= 1", module="oracles", n_modes=config.n_modes)
            modes = environment_service.discretize_spectral_density(config.r, config.omega_c, config.n_modes)
            series = oracles_service.harmonic_correlation(modes, config.beta, times)
            report["detailed_balance_residual"] = oracles_service.detailed_balance_residual(modes, config.beta)
        report["series"] = series.to_dict()
        return {"oracle": series.to_frame()}, {"oracle": report}

    # ETH

    def _eth_demo(self, config: EthDemoConfig):
        spec = _build(EthSpec, dim=max(config.dims), seed=config.seed, **config.spec_fields())
        times = np.linspace(0.0, config.t_max, config.n_points)

        environment = eth_service.generate_eth_environment(spec)
        series = eth_service.eth_correlation(environment, times)
        averaged = eth_service.noise_averaged_correlation(spec, times)
        decay = eth_service.verify_polynomial_decay(series, config.n_order)

        seeds = [config.seed + k for k in range(config.seeds)]
        study = eth_service.offset_study(config.dims, seeds, spec, config.jobs)

        frame = series.to_frame()
        frame["re_C_averaged"] = averaged.real
        frame["im_C_averaged"] = averaged.imag
        report = {
            "environment": environment.to_dict(),
            "series": series.to_dict(),
            "noise_averaged_offset": averaged.offset_estimate,
            "polynomial_decay": decay.to_dict(),
            "offset_study": study.to_dict(),
        }
        return {"eth_correlation": frame, "eth_offsets": study.to_frame()}, {"eth_demo": report}

    # Master equations

    def _master_eq(self, config: MasterEqConfig):
        system = SystemSpec(
            hamiltonian=0.5 * config.omega_q * SIGMA_Z,
            coupling=COUPLINGS[config.coupling],
            coupling_strength=config.coupling_strength,
            label=f"qubit_{config.coupling}",
        )
        bath = dynamics_service.ohmic_bath(config.r, config.omega_c, config.beta, config.offset)
        rho0 = dynamics_service.initial_state(system, config.initial)

        variant = IntegratorVariant(config.variant.upper())
        if variant is IntegratorVariant.SECULAR_RATE:
            p0 = np.real(np.diag(system.to_eigenbasis(rho0)))
            run = dynamics_service.secular_rate_equations(system, bath, p0 / p0.sum(), config.t_max, config.dt)
        elif variant is IntegratorVariant.CONVOLUTED:
            run = dynamics_service.evolve_convoluted(system, bath, rho0, config.t_max, config.dt, config.gamma_variant)
        else:
            run = dynamics_service.evolve_time_local(system, bath, rho0, config.t_max, config.dt, config.gamma_variant)

        steady = dynamics_service.steady_state_report(run, config.beta, config.compare_initial)
        kms = dynamics_service.kms_ratio(bath, config.omega_q, config.beta)
        report = {"run": run.to_dict(), "steady_state": steady.to_dict(), "kms": kms.to_dict()}
        return {"trajectory": run.to_frame()}, {"master_eq": report}

    # Ensembles

    def _ensemble(self, config: EnsembleConfig):
        if not (config.omega_min < config.omega_max and config.band_min < config.band_max):
            raise ParameterError("omega and band ranges must be increasing", module="ensemble")
        spec = _build(EnsembleSpec, **config.spec_fields())
        molecules = ensemble_service.sample_molecules(spec)
        times = np.linspace(0.0, config.t_max, config.n_points)
        ensemble = ensemble_service.ensemble_correlation(molecules, times, config.jobs)

        if config.fit_components:
            components = ensemble_service.offset_components(molecules, times, config.jobs).as_array()
        else:
            rates = ensemble_service.sample_relaxation_rates(spec.n_molecules, config.nu_min, config.nu_max, config.seed)
            components = np.column_stack((ensemble.molecule_offsets, rates))
        if config.include_static:
            components = np.vstack((components, [[ensemble.aggregate_offset, 0.0]]))

        omegas = np.logspace(math.log10(config.omega_min), math.log10(config.omega_max), config.n_omega)
        chi = ensemble_service.susceptibility(components, omegas)
        slope = ensemble_service.loglog_slope(chi, (config.band_min, config.band_max))
        flattening = ensemble_service.band_flattening(chi, decades=1.0, low=config.band_min)

        tables = {
            "ensemble_correlation": ensemble.series.to_frame(),
            "susceptibility": chi.to_frame(),
            "components": chi.components_frame(),
        }
        report = {
            "ensemble": ensemble.to_dict() | {"series": ensemble.series.to_dict()},
            "susceptibility": chi.to_dict(),
            "slope": slope.to_dict(),
            "lowest_decade": flattening.to_dict(),
            "fit_components": config.fit_components,
        }
        return tables, {"ensemble": report}

    # Fits and diagnostics

    def _fit(self, config: FitConfig):
        if config.input:
            times, values = _read_series(config.input, config.column)
            values = np.real(values)
            source = {"input": config.input, "column": config.column}
        else:
            truth = _build(
                DecayModelParams,
                A0=config.A0,
                omega0=config.omega0,
                B0=config.B0,
                a=config.a,
                C0_tilde=config.C0_tilde,
                T0=config.T0,
            )
            times = np.linspace(0.0, config.t_max, config.n_points)
            values = oracles_service.evaluate_decay_models(truth, times)
            if config.noise > 0:
                values = values + config.noise * np.random.default_rng(config.seed).standard_normal(times.size)
            source = {"synthetic": truth.model_dump(), "noise": config.noise}

        if config.model == "decay":
            result = fitting_service.fit_correlation(values, times)
        else:
            result = fitting_service.fit_weak_coupling_form(values, times)
        model = oracles_service.evaluate_decay_models(result.parameters, times)

        frame = pd.DataFrame({"t": times, "data": values, "model": model, "residual": values - model})
        return {"fit": frame}, {"fit": {"model": config.model, "source": source, **result.to_dict()}}

    def _davies(self, config: DaviesConfig):
        if config.input:
            times, values = _read_series(config.input, config.column)
            label = Path(config.input).stem
        else:
            times = np.linspace(0.0, config.t_max, config.n_points)
            values = np.exp(-times) if config.kind == "exponential" else np.full(times.size, config.value)
            label = config.kind
        series = CorrelationSeries(times=times, values=np.asarray(values, dtype=complex), label=label)
        report = correlation_service.davies_diagnostic(series, config.epsilon_exp)
        frame = pd.DataFrame({"T": report.horizons, "integral": report.integrals})
        return {"davies_integrals": frame}, {"davies": {"series": series.to_dict(), **report.to_dict()}}


# Global workflows service instance
workflows_service = ExperimentWorkflowsService()
