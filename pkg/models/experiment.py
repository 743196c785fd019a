from typing import Any, Dict, List, Literal, Optional, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from utils.errors import ConfigurationError

OutputFormat = Literal["csv", "json", "both"]


def _as_list(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


class ExperimentConfig(BaseModel):
    """Keys shared by every subcommand; flags on the command line override them"""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    out: Optional[str] = None
    jobs: Optional[int] = Field(default=None, ge=1)
    format: OutputFormat = "both"


class MoleculeKeys(ExperimentConfig):
    epsilon: float = 1.0
    delta: float = 1.0
    r: float = Field(default=0.0, ge=0.0, le=1.0)
    omega_c: float = Field(default=1.0, gt=0.0)
    n_modes: int = Field(default=0, ge=0)
    n_max: Optional[int] = Field(default=None, ge=1)
    beta: float = Field(default=1.0, ge=0.0)
    tail_tolerance: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    def molecule(self) -> Dict[str, Any]:
        return self.model_dump(include={"epsilon", "delta", "r", "omega_c", "n_modes", "n_max", "beta"})


class CorrelationConfig(MoleculeKeys):
    """Single-molecule correlation function and its offset"""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={"example": {"epsilon": 1.0, "delta": 1.0, "r": 0.0, "n_modes": 1, "beta": 1.0}},
    )

    t_max: Optional[float] = Field(default=None, gt=0.0)
    n_points: int = Field(default=2048, ge=64)
    degeneracy_tolerance: Optional[float] = Field(default=None, gt=0.0)
    window_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    renormalize: bool = True


class OffsetScanConfig(ExperimentConfig):
    """beta x r heatmap of the offset"""

    epsilon: float = 1.0
    delta: float = 1.0
    omega_c: float = Field(default=1.0, gt=0.0)
    n_modes: int = Field(default=1, ge=0)
    n_max: Optional[int] = Field(default=None, ge=1)
    betas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0, 10.0], min_length=1)
    rs: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0], min_length=1)
    tail_tolerance: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @field_validator("betas", "rs", mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        return _as_list(value)


class BkkStatsConfig(MoleculeKeys):
    bins: int = Field(default=50, ge=1)


class OracleConfig(MoleculeKeys):
    kind: Literal["spin_coherence", "pure_dephasing", "harmonic"] = "spin_coherence"
    t_max: float = Field(default=50.0, gt=0.0)
    n_points: int = Field(default=2001, ge=2)


class EthDemoConfig(ExperimentConfig):
    """Synthetic ETH environments: correlation, decay check and the offset-versus-dim study"""

    dims: List[int] = Field(default_factory=lambda: [100, 400], min_length=1)
    seeds: int = Field(default=20, ge=1, description="number of seeds per dimension")
    energy_width: float = Field(default=5.0, gt=0.0)
    band: Optional[float] = Field(default=None, gt=0.0)
    envelope_width: float = Field(default=1.0, gt=0.0)
    diagonal_value: float = 0.0
    noise_amplitude: float = Field(default=1.0, gt=0.0)
    noise: Literal["real", "complex"] = "real"
    spectrum: Literal["random", "quantile"] = "random"
    typical_diagonal: bool = False
    beta: float = Field(default=0.0, ge=0.0)
    t_max: float = Field(default=10.0, gt=0.0)
    n_points: int = Field(default=401, ge=16)
    n_order: int = Field(default=1, ge=1)

    @field_validator("dims", mode="before")
    @classmethod
    def _split_dims(cls, value: Any) -> Any:
        return _as_list(value)

    def spec_fields(self) -> Dict[str, Any]:
        return self.model_dump(
            include={
                "energy_width",
                "band",
                "envelope_width",
                "diagonal_value",
                "noise_amplitude",
                "noise",
                "spectrum",
                "typical_diagonal",
                "beta",
            }
        )


class MasterEqConfig(ExperimentConfig):
    """Two-level system H = (omega_q/2) sigma_z coupled through S to an Ohmic bath"""

    variant: Literal["time_local", "convoluted", "secular_rate"] = "time_local"
    omega_q: float = Field(default=1.0, gt=0.0)
    coupling: Literal["sigma_x", "sigma_z", "sigma_x_plus_z"] = "sigma_x"
    coupling_strength: float = Field(default=0.3, ge=0.0)
    offset: float = Field(default=0.0, ge=0.0)
    r: float = Field(default=1.0, ge=0.0, le=1.0)
    omega_c: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=1.0, gt=0.0)
    t_max: float = Field(default=100.0, gt=0.0)
    dt: float = Field(default=0.05, gt=0.0)
    initial: Literal["excited", "ground", "mixed"] = "excited"
    gamma_variant: Literal["infinite", "finite"] = "infinite"
    compare_initial: bool = True


class EnsembleConfig(ExperimentConfig):
    """Gaussian molecule ensemble and the Lorentzian-mixture susceptibility"""

    n_molecules: int = Field(default=50, ge=1)
    mean_delta: float = Field(default=1.0, gt=0.0)
    mean_epsilon: float = Field(default=1.0, gt=0.0)
    sigma: float = Field(default=0.3, ge=0.0)
    r: float = Field(default=0.25, ge=0.0, le=1.0)
    omega_c: float = Field(default=1.0, gt=0.0)
    n_modes: int = Field(default=1, ge=0)
    n_max: Optional[int] = Field(default=None, ge=1)
    beta: float = Field(default=1.0, ge=0.0)
    t_max: float = Field(default=200.0, gt=0.0)
    n_points: int = Field(default=4001, ge=64)
    omega_min: float = Field(default=1e-4, gt=0.0)
    omega_max: float = Field(default=1.0, gt=0.0)
    n_omega: int = Field(default=200, ge=8)
    band_min: float = Field(default=1e-3, gt=0.0)
    band_max: float = Field(default=1e-1, gt=0.0)
    fit_components: bool = False
    # rate distribution Q(nu) ~ 1/nu used when components are not fitted
    nu_min: float = Field(default=1e-4, gt=0.0)
    nu_max: float = Field(default=1.0, gt=0.0)
    include_static: bool = True

    def spec_fields(self) -> Dict[str, Any]:
        return self.model_dump(
            include={"n_molecules", "mean_delta", "mean_epsilon", "sigma", "r", "omega_c", "n_modes", "n_max", "beta", "seed"}
        )


class FitConfig(ExperimentConfig):
    """Decay-model extraction from a CSV column or from synthetic model data"""

    input: Optional[str] = None
    column: str = "re_C"
    model: Literal["decay", "weak_coupling"] = "decay"
    A0: float = 0.5
    omega0: float = 2.7
    B0: float = Field(default=0.3, ge=0.0)
    a: float = Field(default=1.41421, gt=0.0)
    C0_tilde: float = 0.31
    T0: Optional[float] = Field(default=50.0, gt=0.0)
    noise: float = Field(default=0.0, ge=0.0)
    t_max: float = Field(default=250.0, gt=0.0)
    n_points: int = Field(default=10001, ge=64)


class DaviesConfig(ExperimentConfig):
    input: Optional[str] = None
    column: str = "re_C"
    kind: Literal["exponential", "constant"] = "exponential"
    value: float = 0.3
    epsilon_exp: float = Field(default=0.5, gt=0.0)
    t_max: float = Field(default=1000.0, gt=0.0)
    n_points: int = Field(default=100001, ge=64)


COMMAND_CONFIGS: Dict[str, Type[ExperimentConfig]] = {
    "correlation": CorrelationConfig,
    "offset-scan": OffsetScanConfig,
    "bkk-stats": BkkStatsConfig,
    "oracle": OracleConfig,
    "eth-demo": EthDemoConfig,
    "master-eq": MasterEqConfig,
    "ensemble": EnsembleConfig,
    "fit": FitConfig,
    "davies": DaviesConfig,
}


def build_experiment_config(
    command: str,
    values: Dict[str, Any],
    lines: Optional[Dict[str, int]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Validate a flat parameter mapping against the command's model.

    Overrides (command-line flags) win over file values; None overrides are ignored.
    The first validation failure becomes a ConfigurationError "<key>: <reason>".
    """
    if command not in COMMAND_CONFIGS:
        raise ConfigurationError(f"unknown command '{command}'", key="command")
    lines = lines or {}
    merged = dict(values)
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        return COMMAND_CONFIGS[command].model_validate(merged)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"][:1]) or "<config>"
        reason = "unknown key" if error["type"] == "extra_forbidden" else error["msg"]
        where = f" (line {lines[key]})" if key in lines else ""
        raise ConfigurationError(f"{key}: {reason}{where}", key=key, line=lines.get(key))
