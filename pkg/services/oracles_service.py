"""
Oracles Service
Closed-form reference correlation functions for the analytically solvable
regimes (pure dephasing, negligible vibrations, harmonic bath), the golden-rule
coefficients of the continuum Ohmic bath, and the two decay models used by the
fitting service.
"""

from typing import Optional, Sequence, Tuple, Union
import math

import numpy as np
from scipy import integrate

from models.correlation import CorrelationSeries
from models.environment import ModeSet, MoleculeParams
from models.fitting import DecayModelParams, WeakCouplingModelParams
from services.environment_service import environment_service
from utils.errors import ParameterError
from utils.logging import get_logger
from utils.validation import require_finite

logger = get_logger(__name__)

MODULE = "oracles"


def _sech_squared(x: np.ndarray) -> np.ndarray:
    """sech^2 without overflow at large |x|"""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


class OraclesService:
    """Service for closed-form reference correlation functions"""

    # Thermal helpers

    def bose_einstein(self, omega, beta: float) -> np.ndarray:
        """N(w) = 1 / (exp(beta w) - 1)"""
        if not beta > 0 or not math.isfinite(beta):
            raise ParameterError("Bose-Einstein occupation needs 0 < beta < inf", module=MODULE, beta=beta)
        omega = np.asarray(omega, dtype=float)
        if np.any(omega <= 0):
            raise ParameterError("Bose-Einstein occupation needs positive frequencies", module=MODULE)
        return 1.0 / np.expm1(beta * omega)

    def dephasing_exponent(self, modes: ModeSet, beta: float, t_grid: Sequence[float]) -> np.ndarray:
        """Gamma_beta(t) = 8 sum (g/w)^2 sin^2(w t / 2) coth(beta w / 2)"""
        times = np.asarray(t_grid, dtype=float)
        if len(modes) == 0:
            return np.zeros_like(times)
        coth = 1.0 + 2.0 * self.bose_einstein(modes.frequencies, beta)
        weights = 8.0 * (modes.couplings / modes.frequencies) ** 2 * coth
        return np.sin(0.5 * np.outer(times, modes.frequencies)) ** 2 @ weights

    # Correlation oracles

    def pure_dephasing_correlation(
        self,
        params: MoleculeParams,
        modes: Optional[ModeSet] = None,
        t_grid: Sequence[float] = (),
    ) -> CorrelationSeries:
        """
        Delta = 0 closed form:
        C(t) = [e^{-i eps t}/(1+e^{-beta eps}) + e^{i eps t}/(1+e^{beta eps})]
               * exp(-4i sum (g/w)^2 sin(w t)) * exp(-Gamma_beta(t))
        """
        if params.delta != 0:
            raise ParameterError("pure dephasing oracle requires delta = 0", module=MODULE, delta=params.delta)
        if modes is None:
            modes = (
                environment_service.discretize_spectral_density(params.r, params.omega_c, params.n_modes)
                if params.n_modes > 0
                else ModeSet(frequencies=np.array([]), couplings=np.array([]))
            )

        times = np.asarray(t_grid, dtype=float)
        require_finite(times, "time grid", MODULE)
        beta, eps = params.beta, params.epsilon

        # occupation of the lower and upper spin levels, stable at large beta*|eps|
        lower = 0.5 * (1.0 + math.tanh(0.5 * beta * eps))
        upper = 1.0 - lower
        prefactor = lower * np.exp(-1j * eps * times) + upper * np.exp(1j * eps * times)

        if len(modes):
            phase_weights = 4.0 * (modes.couplings / modes.frequencies) ** 2
            phase = np.sin(np.outer(times, modes.frequencies)) @ phase_weights
            damping = self.dephasing_exponent(modes, beta, times)
            values = prefactor * np.exp(-1j * phase - damping)
        else:
            values = prefactor

        logger.log_computation("pure_dephasing_correlation", n_modes=len(modes), points=int(times.size))
        return CorrelationSeries(times=times, values=values, mean_coupling=0.0, offset_estimate=0.0, label="pure_dephasing")

    def spin_coherence_correlation(self, epsilon: float, delta: float, beta: float, t_grid: Sequence[float]) -> CorrelationSeries:
        """
        r = 0 closed form for the renormalized sigma_x correlation:
        (eps^2/W^2)(cos Wt - i tanh(beta W/2) sin Wt) + (Delta^2/W^2) sech^2(beta W/2)

        mean_coupling carries <sigma_x> = (Delta/W) tanh(beta W/2) and
        offset_estimate the offset (Delta^2/W^2) sech^2(beta W/2).
        """
        rabi = math.hypot(epsilon, delta)
        if rabi == 0.0:
            raise ParameterError("epsilon = delta = 0 leaves the Rabi frequency singular", module=MODULE)
        if beta < 0 or not math.isfinite(beta):
            raise ParameterError("beta must be finite and nonnegative", module=MODULE, beta=beta)

        times = np.asarray(t_grid, dtype=float)
        half = 0.5 * beta * rabi
        tanh = math.tanh(half)
        offset = (delta / rabi) ** 2 * float(_sech_squared(np.array(half)))
        oscillating = (epsilon / rabi) ** 2 * (np.cos(rabi * times) - 1j * tanh * np.sin(rabi * times))

        return CorrelationSeries(
            times=times,
            values=oscillating + offset,
            mean_coupling=(delta / rabi) * tanh,
            offset_estimate=offset,
            slowest_frequency=rabi if epsilon != 0 else None,
            label="spin_coherence",
        )

    def harmonic_correlation(self, modes: ModeSet, beta: float, t_grid: Sequence[float]) -> CorrelationSeries:
        """C(t) = sum g^2 [(N+1) e^{-iwt} + N e^{iwt}]"""
        if not beta > 0:
            raise ParameterError("harmonic oracle needs beta > 0", module=MODULE, beta=beta)
        times = np.asarray(t_grid, dtype=float)
        occupation = self.bose_einstein(modes.frequencies, beta)
        phases = np.exp(-1j * np.outer(times, modes.frequencies))
        g2 = modes.couplings ** 2
        values = phases @ (g2 * (occupation + 1.0)) + phases.conj() @ (g2 * occupation)
        return CorrelationSeries(
            times=times,
            values=values,
            mean_coupling=0.0,
            offset_estimate=0.0,
            slowest_frequency=float(modes.frequencies[0]) if len(modes) else None,
            label="harmonic",
        )

    def detailed_balance_residual(self, modes: ModeSet, beta: float) -> float:
        """max |(N+1) e^{-beta w} - N| over the modes"""
        occupation = self.bose_einstein(modes.frequencies, beta)
        return float(np.max(np.abs((occupation + 1.0) * np.exp(-beta * modes.frequencies) - occupation)))

    # Golden-rule coefficients of the continuum Ohmic bath

    def _ohmic_thermal_density(self, omega: np.ndarray, r: float, omega_c: float, beta: float) -> np.ndarray:
        """J(w) N(w), with its finite w -> 0 limit r^2 / (beta w_c)"""
        omega = np.asarray(omega, dtype=float)
        safe = np.where(omega > 0, omega, 1.0)
        value = environment_service.ohmic_spectral_density(safe, r, omega_c) / np.expm1(beta * safe)
        return np.where(omega > 0, value, r ** 2 / (beta * omega_c))

    def ohmic_half_fourier(
        self, omega: Union[float, Sequence[float]], r: float, omega_c: float, beta: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        gamma(w) = pi J(w)(N(w)+1) for w > 0, pi J(|w|)N(|w|) for w < 0,
        and sigma(w) as the principal-value integral over [0, 2 w_c].
        """
        if not beta > 0:
            raise ParameterError("golden-rule rates need beta > 0", module=MODULE, beta=beta)
        omegas = np.atleast_1d(np.asarray(omega, dtype=float))
        upper = 2.0 * omega_c

        def emission(x):
            return environment_service.ohmic_spectral_density(x, r, omega_c) + self._ohmic_thermal_density(x, r, omega_c, beta)

        def absorption(x):
            return self._ohmic_thermal_density(x, r, omega_c, beta) * (x <= upper)

        gamma = np.empty_like(omegas)
        sigma = np.empty_like(omegas)
        for index, w in enumerate(omegas):
            if w > 0:
                gamma[index] = math.pi * float(emission(np.array(w)))
            elif w < 0:
                gamma[index] = math.pi * float(absorption(np.array(-w)))
            else:
                gamma[index] = math.pi * r ** 2 / (beta * omega_c)
            sigma[index] = self._principal_value(w, emission, absorption, upper)
        return gamma, sigma

    def _principal_value(self, w: float, emission, absorption, upper: float) -> float:
        """P int_0^{2w_c} [J(N+1)/(w - x) + J N/(w + x)] dx"""
        if w == 0:
            # the two halves diverge separately; their sum is -J(x)/x
            value, _ = integrate.quad(lambda x: float(absorption(np.array(x)) - emission(np.array(x))) / x, 0.0, upper, limit=200)
            return float(value)
        # J(N+1)/(w - x) = -J(N+1)/(x - w)
        if 0 < w < upper:
            first, _ = integrate.quad(lambda x: -float(emission(np.array(x))), 0.0, upper, weight="cauchy", wvar=w, limit=200)
        else:
            first, _ = integrate.quad(lambda x: float(emission(np.array(x))) / (w - x), 0.0, upper, limit=200)
        # J N/(w + x) = J N/(x - (-w))
        if 0 < -w < upper:
            second, _ = integrate.quad(lambda x: float(absorption(np.array(x))), 0.0, upper, weight="cauchy", wvar=-w, limit=200)
        else:
            second, _ = integrate.quad(lambda x: float(absorption(np.array(x))) / (w + x), 0.0, upper, limit=200)
        return float(first + second)

    # Decay models

    def evaluate_decay_models(
        self, model_params: Union[DecayModelParams, WeakCouplingModelParams], t_grid: Sequence[float]
    ) -> np.ndarray:
        """Real fit model on the grid; T0 = None makes the second term a constant offset"""
        times = np.asarray(t_grid, dtype=float)
        require_finite(times, "time grid", MODULE)

        if isinstance(model_params, DecayModelParams):
            p = model_params
            envelope = np.exp(-p.B0 * np.abs(times) ** p.a)
            tail = p.C0_tilde * np.exp(-times * p.relaxation_rate)
            return p.A0 * np.cos(p.omega0 * times) * envelope + tail

        if isinstance(model_params, WeakCouplingModelParams):
            p = model_params
            return (
                p.amplitude * np.exp(-p.damping * times) * np.cos(p.frequency * times)
                + p.offset * np.exp(-p.offset_rate * times)
                + p.const
            )

        raise ParameterError(
            "model parameters must be DecayModelParams or WeakCouplingModelParams",
            module=MODULE,
            received=type(model_params).__name__,
        )


# Global oracles service instance
oracles_service = OraclesService()
