"""
Dynamics Service
Second-order weak-coupling reduced dynamics for a bath correlation with an
offset, C_B(t) = alpha_B(t) + C_0.

All integrators work in the interaction picture with respect to H~_S and in its
eigenbasis, where S(t)[a,b] = S_ab exp(i E_ab t). The offset memory term is kept
in the form

    C_0 int_0^t dtau [S(t - tau) rho(tau), S(t)] + h.c.

whose time-local counterpart replaces rho(tau) by rho(t).
"""

from functools import partial
from typing import Callable, Optional, Sequence, Tuple
import math

import numpy as np
from scipy import integrate
from scipy.signal import windows
from scipy.stats import linregress

from models.dynamics import (
    BathInput,
    HalfFourierResult,
    HalfFourierStatus,
    IntegratorVariant,
    KmsReport,
    MasterEqRun,
    PlateauStatus,
    RunDiagnostics,
    Stability,
    SteadyStateReport,
    SystemSpec,
    TrajectoryGap,
)
from services.oracles_service import oracles_service
from utils.config import get_settings
from utils.errors import DimensionMismatchError, ParameterError, StepSizeError
from utils.logging import get_logger
from utils.validation import require_density_matrix

logger = get_logger(__name__)
settings = get_settings()

MODULE = "master_eq"

GAMMA_VARIANTS = ("infinite", "finite")
TAIL_FRACTION = 0.2
PLATEAU_FRACTION = 0.2
UNSTABLE_FACTOR = 10.0
SECULAR_GAP_FACTOR = 10.0


def _unique_frequencies(values: np.ndarray, tolerance: float) -> Tuple[np.ndarray, np.ndarray]:
    """Merge frequencies closer than tolerance; returns (representatives, inverse index)"""
    flat = values.reshape(-1)
    order = np.argsort(flat, kind="stable")
    ordered = flat[order]
    labels = np.concatenate(([0], np.cumsum(np.diff(ordered) >= tolerance)))
    representatives = np.array([ordered[labels == k].mean() for k in range(labels[-1] + 1)])
    inverse = np.empty_like(labels)
    inverse[order] = labels
    return representatives, inverse.reshape(values.shape)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    difference = rho - sigma
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (difference + difference.conj().T)))))


class _CoefficientTable:
    """Gamma^[a,b](t) = int_0^t alpha(tau) exp(i E_ba tau) dtau, or its t -> inf limit"""

    def __init__(self, infinite: np.ndarray, cumulative: Optional[np.ndarray], grid: Optional[np.ndarray], inverse: np.ndarray):
        self.infinite = infinite
        self.cumulative = cumulative
        self.grid = grid
        self.inverse = inverse
        self._infinite_matrix = infinite[inverse]

    @property
    def time_dependent(self) -> bool:
        return self.cumulative is not None

    def at(self, t: float) -> np.ndarray:
        if self.cumulative is None or t >= self.grid[-1]:
            return self._infinite_matrix
        index = min(int(np.searchsorted(self.grid, t, side="right")) - 1, self.grid.size - 2)
        weight = (t - self.grid[index]) / (self.grid[index + 1] - self.grid[index])
        values = (1.0 - weight) * self.cumulative[:, index] + weight * self.cumulative[:, index + 1]
        return values[self.inverse]


class DynamicsService:
    """Service for offset-bearing second-order master equations"""

    def __init__(self):
        self.max_step_phase = settings.MAX_STEP_PHASE
        self.bohr_tolerance = settings.BOHR_FREQUENCY_TOLERANCE
        self.decay_tolerance = settings.HALF_FOURIER_DECAY_TOLERANCE
        self.plateau_tolerance = settings.PLATEAU_TOLERANCE

    # Baths

    def ohmic_bath(self, r: float, omega_c: float, beta: float, offset: float = 0.0) -> BathInput:
        """Continuum Ohmic bath with closed-form golden-rule coefficients"""
        handle = partial(oracles_service.ohmic_half_fourier, r=r, omega_c=omega_c, beta=beta)
        return BathInput(offset=offset, rates=handle, beta=beta, label=f"ohmic_r{r:g}")

    def half_fourier(self, times: np.ndarray, alpha: np.ndarray, omegas) -> HalfFourierResult:
        """
        int_0^inf alpha(t) exp(iwt) dt by the trapezoid rule on the grid plus an
        exponential tail alpha(T) exp(iwT)/(kappa - iw), kappa fitted on the
        trailing part of log|alpha|.
        """
        times = np.asarray(times, dtype=float)
        alpha = np.asarray(alpha, dtype=complex)
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        if times.size < 8:
            raise ParameterError("alpha grid too short for the half-Fourier transform", module=MODULE, points=int(times.size))

        phases = np.exp(1j * np.outer(omegas, times))
        values = integrate.trapezoid(alpha[None, :] * phases, times, axis=1)

        initial = abs(alpha[0]) or float(np.max(np.abs(alpha))) or 1.0
        tail_magnitude = float(abs(alpha[-1]) / initial)
        status = HalfFourierStatus.CONVERGED
        tail_rate = None

        if tail_magnitude > self.decay_tolerance:
            logger.warning(
                "alpha_B has not decayed within the grid",
                relative_tail=tail_magnitude,
                tolerance=self.decay_tolerance,
            )
            start = int((1.0 - TAIL_FRACTION) * times.size)
            fit = linregress(times[start:], np.log(np.abs(alpha[start:]) + 1e-300))
            tail_rate = float(-fit.slope)
            if tail_rate > 0:
                end = times[-1]
                values = values + alpha[-1] * np.exp(1j * omegas * end) / (tail_rate - 1j * omegas)
            else:
                status = HalfFourierStatus.NON_CONVERGENT
                logger.warning("alpha_B does not decay; half-Fourier transform flagged", tail_rate=tail_rate)

        return HalfFourierResult(
            omegas=omegas,
            gamma=values.real,
            sigma=values.imag,
            status=status,
            tail_rate=tail_rate,
            tail_magnitude=tail_magnitude,
        )

    def bath_coefficients(self, bath: BathInput, omegas, t: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(gamma, sigma) at t -> inf, or the finite-time gamma_t, sigma_t when t is given"""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        if t is None:
            if bath.rates is not None:
                gamma, sigma = bath.rates(omegas)
                return np.asarray(gamma, dtype=float), np.asarray(sigma, dtype=float)
            if bath.has_grid:
                result = self.half_fourier(bath.times, bath.alpha, omegas)
                return result.gamma, result.sigma
            return np.zeros_like(omegas), np.zeros_like(omegas)

        if not bath.has_grid:
            raise ParameterError("finite-time coefficients need alpha_B on a grid", module=MODULE)
        table = self._coefficient_table(bath, omegas.reshape(-1, 1), "finite")
        values = table.at(float(t)).reshape(-1)
        return values.real, values.imag

    def kms_ratio(self, bath: BathInput, omega: float, beta: Optional[float] = None) -> KmsReport:
        beta = beta if beta is not None else bath.beta
        if beta is None:
            raise ParameterError("KMS check needs beta", module=MODULE)
        gamma, _ = self.bath_coefficients(bath, [omega, -omega])
        return KmsReport(omega=float(omega), beta=float(beta), ratio=float(gamma[0] / gamma[1]), expected=math.exp(beta * omega))

    def _coefficient_table(self, bath: BathInput, frequencies: np.ndarray, gamma_variant: str) -> _CoefficientTable:
        """Table over the matrix of frequencies (entry [a,b] evaluated at frequencies[a,b])"""
        if gamma_variant not in GAMMA_VARIANTS:
            raise ParameterError("gamma_variant must be 'infinite' or 'finite'", module=MODULE, gamma_variant=gamma_variant)
        unique, inverse = _unique_frequencies(frequencies, self.bohr_tolerance)
        gamma, sigma = self.bath_coefficients(bath, unique)
        infinite = gamma + 1j * sigma

        if gamma_variant == "infinite":
            return _CoefficientTable(infinite, None, None, inverse)
        if not bath.has_grid:
            raise ParameterError("finite-time coefficients need alpha_B on a grid", module=MODULE)
        integrand = bath.alpha[None, :] * np.exp(1j * np.outer(unique, bath.times))
        cumulative = integrate.cumulative_trapezoid(integrand, bath.times, axis=1, initial=0.0)
        return _CoefficientTable(infinite, cumulative, bath.times, inverse)

    # Helpers

    def initial_state(self, system: SystemSpec, kind: str = "excited") -> np.ndarray:
        """Density matrix in the original basis: excited, ground or mixed"""
        d = system.dimension
        if kind == "mixed":
            return np.eye(d, dtype=complex) / d
        if kind not in ("excited", "ground"):
            raise ParameterError("initial state must be excited, ground or mixed", module=MODULE, kind=kind)
        index = d - 1 if kind == "excited" else 0
        vector = system.eigenvectors[:, index]
        return np.outer(vector, vector.conj())

    def _grid(self, system: SystemSpec, t_max: float, dt: float) -> Tuple[np.ndarray, int]:
        if not (t_max > 0 and dt > 0):
            raise ParameterError("t_max and dt must be positive", module=MODULE, t_max=t_max, dt=dt)
        fastest = float(np.max(np.abs(system.bohr_frequencies)))
        if dt * fastest >= self.max_step_phase:
            raise StepSizeError(
                "dt does not resolve the fastest Bohr frequency",
                module=MODULE,
                dt=dt,
                max_bohr_frequency=fastest,
                limit=self.max_step_phase,
            )
        steps = max(1, int(round(t_max / dt)))
        return dt * np.arange(steps + 1), steps

    def _offset_kernel(self, system: SystemSpec, t: float) -> np.ndarray:
        """K_t[a,b] = S_ab int_0^t exp(i E_ab tau) dtau"""
        energies = system.bohr_frequencies
        resonant = np.abs(energies) < self.bohr_tolerance
        safe = np.where(resonant, 1.0, energies)
        integral = np.where(resonant, t, (np.exp(1j * energies * t) - 1.0) / (1j * safe))
        return system.coupling_eigen * integral

    def _rk4(
        self,
        rhs: Callable[[float, np.ndarray], np.ndarray],
        y0: np.ndarray,
        dt: float,
        steps: int,
        keep: int,
    ) -> Tuple[np.ndarray, Optional[float]]:
        """Classical fixed-step RK4; stores the first `keep` entries of the state"""
        stored = np.empty((steps + 1, keep), dtype=complex)
        y = y0.astype(complex)
        stored[0] = y[:keep]
        for n in range(steps):
            t = n * dt
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = rhs(t + dt, y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                logger.warning("Integration diverged", time=(n + 1) * dt)
                return stored[: n + 1], (n + 1) * dt
            stored[n + 1] = y[:keep]
        return stored, None

    def _prepare(self, system: SystemSpec, rho0: np.ndarray) -> np.ndarray:
        rho0 = np.asarray(rho0, dtype=complex)
        require_density_matrix(rho0, "rho0", MODULE)
        if rho0.shape[0] != system.dimension:
            raise DimensionMismatchError(
                "rho0 dimension disagrees with the system",
                module=MODULE,
                rho0=rho0.shape[0],
                system=system.dimension,
            )
        return system.to_eigenbasis(rho0)

    # Integrators

    def evolve_time_local(
        self,
        system: SystemSpec,
        bath: BathInput,
        rho0: np.ndarray,
        t_max: float,
        dt: float,
        gamma_variant: str = "infinite",
    ) -> MasterEqRun:
        """Offset term with rho(t) in place of rho(tau); closed-form tau-integral"""
        times, steps = self._grid(system, t_max, dt)
        rho = self._prepare(system, rho0)
        d = system.dimension
        g2 = system.coupling_strength ** 2
        energies = system.bohr_frequencies
        s = system.coupling_eigen
        table = self._coefficient_table(bath, -energies, gamma_variant)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            state = y.reshape(d, d)
            phase = np.exp(1j * energies * t)
            s_t = s * phase
            generator = g2 * (s_t * table.at(t) + bath.offset * self._offset_kernel(system, t))
            x = generator @ state @ s_t - s_t @ generator @ state
            return (x + x.conj().T).reshape(-1)

        stored, diverged = self._rk4(rhs, rho.reshape(-1), dt, steps, d * d)
        return self._finish(IntegratorVariant.TIME_LOCAL, system, bath, times, stored, dt, gamma_variant, diverged)

    def evolve_convoluted(
        self,
        system: SystemSpec,
        bath: BathInput,
        rho0: np.ndarray,
        t_max: float,
        dt: float,
        gamma_variant: str = "infinite",
    ) -> MasterEqRun:
        """
        Offset memory through running integrals R_w(t) = int_0^t exp(-i w tau) rho(tau) dtau,
        one per distinct Bohr frequency, integrated alongside rho.
        """
        times, steps = self._grid(system, t_max, dt)
        rho = self._prepare(system, rho0)
        d = system.dimension
        g2 = system.coupling_strength ** 2
        energies = system.bohr_frequencies
        s = system.coupling_eigen
        table = self._coefficient_table(bath, -energies, gamma_variant)

        frequencies, inverse = _unique_frequencies(energies, self.bohr_tolerance)
        masks = np.stack([(inverse == k) for k in range(frequencies.size)]).astype(float)
        n_freq = frequencies.size

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            state = y[: d * d].reshape(d, d)
            history = y[d * d:].reshape(n_freq, d, d)
            phase = np.exp(1j * energies * t)
            s_t = s * phase
            generator = g2 * s_t * table.at(t)
            x = generator @ state @ s_t - s_t @ generator @ state
            if bath.offset:
                memory = np.einsum("kab,kbc->ac", masks * s_t[None, :, :], history)
                x = x + g2 * bath.offset * (memory @ s_t - s_t @ memory)
            d_history = np.exp(-1j * frequencies * t)[:, None, None] * state[None, :, :]
            return np.concatenate(((x + x.conj().T).reshape(-1), d_history.reshape(-1)))

        y0 = np.concatenate((rho.reshape(-1), np.zeros(n_freq * d * d, dtype=complex)))
        stored, diverged = self._rk4(rhs, y0, dt, steps, d * d)
        return self._finish(IntegratorVariant.CONVOLUTED, system, bath, times, stored, dt, gamma_variant, diverged)

    def secular_rates(self, system: SystemSpec, bath: BathInput) -> np.ndarray:
        """W[a,b] = 2 g^2 gamma(E_ba) |S_ab|^2, the b -> a transition rate"""
        table = self._coefficient_table(bath, -system.bohr_frequencies, "infinite")
        rates = 2.0 * system.coupling_strength ** 2 * table.at(math.inf).real * np.abs(system.coupling_eigen) ** 2
        np.fill_diagonal(rates, 0.0)
        return rates

    def secular_gap_ratio(self, system: SystemSpec, rates: np.ndarray) -> Optional[float]:
        """min nonzero |E_ab - E_cd| over the largest rate"""
        frequencies, _ = _unique_frequencies(system.bohr_frequencies, self.bohr_tolerance)
        gaps = np.abs(np.diff(frequencies))
        fastest = float(np.max(np.sum(rates, axis=0))) if rates.size else 0.0
        if gaps.size == 0 or fastest == 0:
            return None
        return float(np.min(gaps) / fastest)

    def secular_rate_equations(
        self,
        system: SystemSpec,
        bath: BathInput,
        p0: Sequence[float],
        t_max: float,
        dt: float = 0.05,
    ) -> MasterEqRun:
        """
        dP_m/dt = sum_b (W_mb P_b - W_bm P_m)
                  + 2 g^2 C_0 sum_b |S_mb|^2 Re(R_mb[b] - R_mb[m]),
        with R_mb[n](t) = int_0^t exp(i E_mb tau) P_n(tau) dtau.
        """
        times, steps = self._grid(system, t_max, dt)
        p0 = np.asarray(p0, dtype=float)
        d = system.dimension
        if p0.shape != (d,) or np.any(p0 < -1e-12) or abs(p0.sum() - 1.0) > 1e-10:
            raise ParameterError("p0 must be a probability vector over the eigenstates", module=MODULE)

        rates = self.secular_rates(system, bath)
        gap_ratio = self.secular_gap_ratio(system, rates)
        if gap_ratio is not None and gap_ratio < SECULAR_GAP_FACTOR:
            logger.warning("Secular approximation questionable", gap_ratio=gap_ratio, required=SECULAR_GAP_FACTOR)

        g2 = system.coupling_strength ** 2
        weights = np.abs(system.coupling_eigen) ** 2
        np.fill_diagonal(weights, 0.0)
        energies = system.bohr_frequencies
        loss = rates.sum(axis=0)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            populations = y[:d].real
            gain_history = y[d: d + d * d].reshape(d, d)
            loss_history = y[d + d * d:].reshape(d, d)
            dp = rates @ populations - loss * populations
            if bath.offset:
                dp = dp + 2.0 * g2 * bath.offset * np.sum(weights * (gain_history.real - loss_history.real), axis=1)
            phase = np.exp(1j * energies * t)
            d_gain = phase * populations[None, :]
            d_loss = phase * populations[:, None]
            return np.concatenate((dp.astype(complex), d_gain.reshape(-1), d_loss.reshape(-1)))

        y0 = np.concatenate((p0.astype(complex), np.zeros(2 * d * d, dtype=complex)))
        stored, diverged = self._rk4(rhs, y0, dt, steps, d)
        states = np.zeros((stored.shape[0], d, d), dtype=complex)
        states[:, np.arange(d), np.arange(d)] = stored.real

        run = self._finish(IntegratorVariant.SECULAR_RATE, system, bath, times[: stored.shape[0]], states.reshape(stored.shape[0], -1), dt, "infinite", diverged)
        run.diagnostics.secular_gap_ratio = gap_ratio
        run.steady_populations = np.real(np.diag(self._plateau_state(run.times, run.states)))
        return run

    # Diagnostics

    def _finish(
        self,
        variant: IntegratorVariant,
        system: SystemSpec,
        bath: BathInput,
        times: np.ndarray,
        stored: np.ndarray,
        dt: float,
        gamma_variant: str,
        diverged: Optional[float],
    ) -> MasterEqRun:
        d = system.dimension
        states = stored.reshape(-1, d, d)
        times = times[: states.shape[0]]

        traces = np.trace(states, axis1=1, axis2=2)
        hermitian_parts = 0.5 * (states + np.conj(np.transpose(states, (0, 2, 1))))
        min_eigenvalue = float(np.min(np.linalg.eigvalsh(hermitian_parts)))

        t_end = float(times[-1])
        infinite = self._coefficient_table(bath, -system.bohr_frequencies, "infinite").at(math.inf)
        max_rate = float(np.max(np.abs(infinite)))
        norm_half = bath.offset * float(np.linalg.norm(self._offset_kernel(system, 0.5 * t_end), 2))
        norm_final = bath.offset * float(np.linalg.norm(self._offset_kernel(system, t_end), 2))

        resonant = np.abs(system.bohr_frequencies) < self.bohr_tolerance
        growing = bath.offset * float(np.linalg.norm(system.coupling_eigen * resonant, 2))
        unstable = diverged is not None or (growing > 0 and growing * t_end > UNSTABLE_FACTOR * max_rate)

        difference = None
        if bath.has_grid:
            finite = self._coefficient_table(bath, -system.bohr_frequencies, "finite").at(t_end)
            difference = float(np.max(np.abs(finite - infinite)))

        diagnostics = RunDiagnostics(
            trace_drift=float(np.max(np.abs(traces - 1.0))),
            hermiticity_drift=float(np.max(np.abs(states - np.conj(np.transpose(states, (0, 2, 1)))))),
            min_eigenvalue=min_eigenvalue,
            offset_norm_half=norm_half,
            offset_norm_final=norm_final,
            max_rate_magnitude=max_rate,
            stability=Stability.UNSTABLE if unstable else Stability.STABLE,
            gamma_variant_difference=difference,
            diverged_at=diverged,
        )
        if unstable:
            logger.warning(
                "Offset coefficients grow without bound",
                offset=bath.offset,
                offset_norm_final=norm_final,
                max_rate=max_rate,
                variant=variant.value,
            )
        logger.log_computation("master_equation", variant=variant.value, steps=int(times.size - 1), trace_drift=diagnostics.trace_drift)
        return MasterEqRun(
            variant=variant,
            times=times,
            states=states,
            system=system,
            bath=bath,
            dt=dt,
            diagnostics=diagnostics,
            gamma_variant=gamma_variant,
        )

    def trajectory_gap(self, run_a: MasterEqRun, run_b: MasterEqRun) -> TrajectoryGap:
        """Per-time max-norm difference of two runs on the same grid"""
        if run_a.times.shape != run_b.times.shape or not np.allclose(run_a.times, run_b.times):
            raise DimensionMismatchError("runs must share the time grid", module=MODULE)
        gaps = np.max(np.abs(run_a.states - run_b.states), axis=(1, 2))
        return TrajectoryGap(times=run_a.times.copy(), gaps=gaps)

    def _plateau_state(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Hann-weighted mean over the trailing fraction of the trajectory"""
        start = min(times.size - 1, int((1.0 - PLATEAU_FRACTION) * times.size))
        window = states[start:]
        if window.shape[0] < 3:
            return window[-1]
        weights = windows.hann(window.shape[0], sym=True)
        return np.tensordot(weights, window, axes=1) / weights.sum()

    def _rerun(self, run: MasterEqRun, rho0_eigen: np.ndarray) -> MasterEqRun:
        t_max = float(run.times[-1])
        if run.variant is IntegratorVariant.SECULAR_RATE:
            return self.secular_rate_equations(run.system, run.bath, np.real(np.diag(rho0_eigen)), t_max, run.dt)
        rho0 = run.system.from_eigenbasis(rho0_eigen)
        if run.variant is IntegratorVariant.CONVOLUTED:
            return self.evolve_convoluted(run.system, run.bath, rho0, t_max, run.dt, run.gamma_variant)
        return self.evolve_time_local(run.system, run.bath, rho0, t_max, run.dt, run.gamma_variant)

    def steady_state_report(self, run: MasterEqRun, beta: float, compare_initial: bool = True) -> SteadyStateReport:
        """Plateau test, trace distance to Gibbs and dependence on the initial state"""
        schrodinger = run.schrodinger_states()
        times = run.times
        reference = int(np.argmin(np.abs(times - 0.9 * times[-1])))
        plateau_change = float(np.max(np.abs(schrodinger[-1] - schrodinger[reference])))
        status = PlateauStatus.CONVERGED if plateau_change < self.plateau_tolerance else PlateauStatus.NOT_CONVERGED

        plateau = self._plateau_state(times, schrodinger)
        gibbs = run.system.gibbs_state(beta)

        dependence = None
        if compare_initial:
            d = run.system.dimension
            ground_population = float(np.real(run.states[0][0, 0]))
            alternate = np.zeros((d, d), dtype=complex)
            if ground_population >= 0.5:
                alternate[d - 1, d - 1] = 1.0
            else:
                alternate[0, 0] = 1.0
            other = self._rerun(run, alternate)
            dependence = trace_distance(plateau, self._plateau_state(other.times, other.schrodinger_states()))

        report = SteadyStateReport(
            status=status,
            plateau_change=plateau_change,
            gibbs_distance=trace_distance(plateau, gibbs),
            initial_state_dependence=dependence,
            plateau_state=plateau,
            gibbs_state=gibbs,
        )
        logger.info("Steady state report", **{k: v for k, v in report.to_dict().items() if not isinstance(v, list)})
        return report


# Global dynamics service instance
dynamics_service = DynamicsService()
