"""
Fitting Service
Nonlinear least-squares extraction of the decay model

    f(t) = A0 cos(w0 t) exp(-B0 t^a) + C~0 exp(-t/T0)

from Re C_B(t), and of the weak-coupling form as an alternative model.
"""

from typing import Optional, Tuple, Union
import math

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.stats import linregress, median_abs_deviation

from models.correlation import CorrelationSeries
from models.fitting import DecayModelParams, FitResult, FitStatus, WeakCouplingFit, WeakCouplingModelParams
from services.oracles_service import oracles_service
from utils.config import get_settings
from utils.errors import ParameterError
from utils.logging import get_logger

logger = get_logger(__name__)
settings = get_settings()

MODULE = "fitkit"

MIN_SAMPLES = 64
A_MIN, A_MAX = 0.5, 3.0
TRAILING_FRACTION = 0.2
TAIL_BLOCKS = 20
# slowest tail rate tried by the initializer, in units of 1 / span
RATE_FLOOR = 1e-3
# log B0 and log(1/T0) are clipped to +-LOG_BOUND before exponentiating
LOG_BOUND = 50.0
# T0 beyond this multiple of the grid span is reported as INFINITE
INFINITE_SPAN_FACTOR = 100.0


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p: float) -> float:
    p = min(max(p, 1e-6), 1.0 - 1e-6)
    return math.log(p / (1.0 - p))


def _bounded_exp(x):
    return np.exp(np.clip(x, -LOG_BOUND, LOG_BOUND))


class FittingService:
    """Service for decay-model fits of correlation functions"""

    def __init__(self):
        self.multi_starts = settings.FIT_MULTI_STARTS
        self.max_evaluations = settings.FIT_MAX_EVALUATIONS
        self.subseed = settings.FIT_SUBSEED

    # Parameter transforms

    def _to_params(self, theta: np.ndarray) -> DecayModelParams:
        return DecayModelParams(
            A0=float(theta[0]),
            omega0=float(theta[1]),
            B0=float(_bounded_exp(theta[2])),
            a=float(A_MIN + (A_MAX - A_MIN) * _sigmoid(theta[3])),
            C0_tilde=float(theta[4]),
            T0=float(1.0 / _bounded_exp(theta[5])),
        )

    def _to_theta(self, params: DecayModelParams) -> np.ndarray:
        rate = params.relaxation_rate or 1e-12
        return np.array(
            [
                params.A0,
                params.omega0,
                math.log(max(params.B0, 1e-12)),
                _logit((params.a - A_MIN) / (A_MAX - A_MIN)),
                params.C0_tilde,
                math.log(rate),
            ]
        )

    def _model(self, theta: np.ndarray, times: np.ndarray) -> np.ndarray:
        a = A_MIN + (A_MAX - A_MIN) * _sigmoid(theta[3])
        oscillating = theta[0] * np.cos(theta[1] * times) * np.exp(-_bounded_exp(theta[2]) * times ** a)
        return oscillating + theta[4] * np.exp(-_bounded_exp(theta[5]) * times)

    # Input handling

    def _unpack(self, series: Union[CorrelationSeries, np.ndarray], times: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        if isinstance(series, CorrelationSeries):
            times, values = series.times, series.real
        else:
            if times is None:
                raise ParameterError("times are required with a bare value array", module=MODULE)
            values = np.real(np.asarray(series))
            times = np.asarray(times, dtype=float)
        if times.size < MIN_SAMPLES:
            raise ParameterError(f"fit needs at least {MIN_SAMPLES} samples", module=MODULE, samples=int(times.size))
        if times[0] != 0.0:
            raise ParameterError("fit grid must start at t = 0", module=MODULE, t0=float(times[0]))
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(times))):
            raise ParameterError("series contains non-finite values", module=MODULE)
        return times, values

    # Initialization

    def _noise_level(self, values: np.ndarray) -> float:
        """White-noise sigma from the first differences of the later half"""
        late = values[values.size // 2:]
        if late.size < 3:
            return 0.0
        return float(median_abs_deviation(np.diff(late), scale="normal") / math.sqrt(2.0))

    def _tail_estimate(self, times: np.ndarray, values: np.ndarray, noise: float) -> Tuple[float, float]:
        """
        (C~0, nu) from block means of the later half: a weighted log-linear fit
        over the blocks that clear the noise floor gives nu, and the
        block-averaged exponential gives C~0.
        """
        span = float(times[-1])
        rate_floor = RATE_FLOOR / span
        half = times.size // 2
        width = max(1, (times.size - half) // TAIL_BLOCKS)
        n_blocks = (times.size - half) // width
        stop = half + width * n_blocks
        block_t = times[half:stop].reshape(n_blocks, width).mean(axis=1)
        block_v = values[half:stop].reshape(n_blocks, width).mean(axis=1)

        sign = 1.0 if float(np.sum(block_v)) >= 0 else -1.0
        magnitude = sign * block_v
        usable = magnitude > 3.0 * noise / math.sqrt(width)
        if np.count_nonzero(usable) < 2:
            trailing = int((1.0 - TRAILING_FRACTION) * times.size)
            return float(np.mean(values[trailing:])), rate_floor

        slope, _ = np.polyfit(block_t[usable], np.log(magnitude[usable]), 1, w=magnitude[usable])
        rate = max(float(-slope), rate_floor)

        # mean of exp(-nu t) over a block of `width` samples, relative to its centre value
        dt = float(times[1] - times[0])
        half_step = 0.5 * rate * dt
        smearing = math.sinh(width * half_step) / (width * math.sinh(half_step)) if half_step > 1e-12 else 1.0

        weights = magnitude[usable] ** 2
        rescaled = magnitude[usable] * np.exp(rate * block_t[usable])
        amplitude = sign * float(np.sum(weights * rescaled) / np.sum(weights)) / smearing
        return amplitude, rate

    def _frequency_estimate(self, times: np.ndarray, residual: np.ndarray, min_frequency: float = 0.0) -> float:
        """Dominant discrete-spectrum peak above min_frequency with parabolic refinement"""
        dt = float(times[1] - times[0])
        spectrum = np.abs(np.fft.rfft(residual - residual.mean(), n=4 * residual.size))
        frequencies = 2.0 * np.pi * np.fft.rfftfreq(4 * residual.size, d=dt)
        allowed = frequencies > min_frequency
        allowed[0] = False
        if not np.any(allowed):
            allowed[1:] = True
        candidates = np.flatnonzero(allowed)
        k = int(candidates[np.argmax(spectrum[candidates])])
        if 1 <= k < spectrum.size - 1:
            left, center, right = spectrum[k - 1], spectrum[k], spectrum[k + 1]
            denominator = left - 2.0 * center + right
            shift = 0.5 * (left - right) / denominator if denominator != 0 else 0.0
            return float(frequencies[k] + shift * (frequencies[1] - frequencies[0]))
        return float(frequencies[k])

    def _envelope_estimate(
        self, times: np.ndarray, residual: np.ndarray, amplitude: float, omega: float, noise: float = 0.0
    ) -> Tuple[float, float]:
        """(B0, a) from log(-log(envelope/A0)) against log t on the early peaks above the noise floor"""
        if amplitude == 0:
            return 1.0 / times[-1], 1.0
        magnitude = np.abs(residual)
        dt = float(times[1] - times[0])
        # peaks of |cos(w t)| are pi / w apart
        distance = int(0.75 * math.pi / (abs(omega) * dt)) if omega != 0 else 1
        distance = min(max(1, distance), max(1, residual.size // 4))
        height = max(10.0 * noise, 1e-3 * abs(amplitude))
        peaks, _ = find_peaks(magnitude, height=height, distance=distance)
        ratio = magnitude[peaks] / abs(amplitude)
        usable = (times[peaks] > 0) & (ratio < 0.99)
        if np.count_nonzero(usable) >= 2:
            fit = linregress(np.log(times[peaks][usable]), np.log(-np.log(ratio[usable])))
            a = float(np.clip(fit.slope, A_MIN + 0.05, A_MAX - 0.05))
            return float(math.exp(fit.intercept)), a
        return 1.0 / times[-1], 1.0

    def initial_guess(self, times: np.ndarray, values: np.ndarray) -> DecayModelParams:
        noise = self._noise_level(values)
        amplitude_tail, rate = self._tail_estimate(times, values, noise)
        residual = values - amplitude_tail * np.exp(-rate * times)
        amplitude = float(values[0] - amplitude_tail)
        # the tail mismatch is confined to frequencies of order nu
        omega = self._frequency_estimate(times, residual, min_frequency=5.0 * rate)
        b0, a = self._envelope_estimate(times, residual, amplitude, omega, noise)
        return DecayModelParams(A0=amplitude, omega0=omega, B0=b0, a=a, C0_tilde=amplitude_tail, T0=1.0 / rate)

    def _starts(self, theta0: np.ndarray) -> list:
        rng = np.random.default_rng(self.subseed)
        starts = [theta0]
        for _ in range(max(0, self.multi_starts - 1)):
            jitter = rng.standard_normal(6)
            perturbed = theta0.copy()
            perturbed[0] *= 1.0 + 0.05 * jitter[0]
            perturbed[1] *= 1.0 + 0.02 * jitter[1]
            perturbed[2] += 0.2 * jitter[2]
            perturbed[3] += 0.3 * jitter[3]
            perturbed[4] *= 1.0 + 0.05 * jitter[4]
            perturbed[5] += 0.2 * jitter[5]
            starts.append(perturbed)
        return starts

    # Fits

    def fit_correlation(
        self,
        series: Union[CorrelationSeries, np.ndarray],
        times: Optional[np.ndarray] = None,
        init_strategy: str = "auto",
        initial: Optional[DecayModelParams] = None,
    ) -> FitResult:
        """Levenberg-Marquardt fit of the decay model, best of the multi-start set"""
        times, values = self._unpack(series, times)
        span = float(times[-1])

        if np.ptp(values) <= 1e-12 * max(1.0, abs(float(np.mean(values)))):
            params = DecayModelParams(A0=0.0, omega0=0.0, B0=0.0, a=1.0, C0_tilde=float(np.mean(values)), T0=None)
            return FitResult(parameters=params, residual_rms=float(np.std(values)), status=FitStatus.CONVERGED, iterations=0, infinite_T0=True)

        if init_strategy == "given":
            if initial is None:
                raise ParameterError("init_strategy 'given' needs initial parameters", module=MODULE)
            guess = initial
        elif init_strategy == "auto":
            guess = self.initial_guess(times, values)
        else:
            raise ParameterError("init_strategy must be 'auto' or 'given'", module=MODULE, init_strategy=init_strategy)

        def residuals(theta):
            return self._model(theta, times) - values

        best = None
        evaluations = 0
        starts = self._starts(self._to_theta(guess))
        for theta in starts:
            result = least_squares(
                residuals,
                theta,
                method="lm",
                x_scale="jac",
                xtol=1e-14,
                ftol=1e-14,
                gtol=1e-14,
                max_nfev=self.max_evaluations,
            )
            evaluations += int(result.nfev)
            if best is None or result.cost < best.cost:
                best = result

        status = FitStatus.CONVERGED if best.success else FitStatus.NON_CONVERGED
        if status is FitStatus.NON_CONVERGED:
            logger.warning("Decay-model fit did not converge", reason=best.message, evaluations=evaluations)

        params = self._to_params(best.x)
        infinite = params.T0 > INFINITE_SPAN_FACTOR * span
        if infinite:
            params = params.model_copy(update={"T0": None})

        rms = float(np.sqrt(np.mean(best.fun ** 2)))
        covariance = self._covariance(best, times.size)
        logger.log_computation("fit_correlation", rms=rms, status=status.value, evaluations=evaluations)
        return FitResult(
            parameters=params,
            residual_rms=rms,
            status=status,
            iterations=evaluations,
            infinite_T0=infinite,
            covariance=covariance,
            starts=len(starts),
        )

    def _covariance(self, result, n_samples: int) -> Optional[np.ndarray]:
        """Natural-parameter covariance by the delta method"""
        jacobian = result.jac
        dof = max(1, n_samples - jacobian.shape[1])
        variance = 2.0 * result.cost / dof
        try:
            internal = np.linalg.pinv(jacobian.T @ jacobian) * variance
        except np.linalg.LinAlgError:
            return None
        theta = result.x
        s = _sigmoid(theta[3])
        derivative = np.diag(
            [1.0, 1.0, float(_bounded_exp(theta[2])), (A_MAX - A_MIN) * s * (1.0 - s), 1.0, -1.0 / float(_bounded_exp(theta[5]))]
        )
        return derivative @ internal @ derivative.T

    def fit_weak_coupling_form(self, series: Union[CorrelationSeries, np.ndarray], times: Optional[np.ndarray] = None) -> WeakCouplingFit:
        """A~0 exp(-kappa t) cos(W0 t) + C0 exp(-lambda t) + const"""
        times, values = self._unpack(series, times)
        span = float(times[-1])
        trailing = int((1.0 - TRAILING_FRACTION) * times.size)
        const = float(np.mean(values[trailing:]))
        amplitude = float(values[0] - const)
        omega = self._frequency_estimate(times, values - const)
        b0, _ = self._envelope_estimate(times, values - const, amplitude, omega, self._noise_level(values))

        theta0 = np.array([amplitude, math.log(max(b0, 1e-6)), omega, 0.0, math.log(1.0 / span), const])

        def unpack(theta) -> WeakCouplingModelParams:
            return WeakCouplingModelParams(
                amplitude=float(theta[0]),
                damping=float(_bounded_exp(theta[1])),
                frequency=float(theta[2]),
                offset=float(theta[3]),
                offset_rate=float(_bounded_exp(theta[4])),
                const=float(theta[5]),
            )

        def residuals(theta):
            return oracles_service.evaluate_decay_models(unpack(theta), times) - values

        result = least_squares(residuals, theta0, method="lm", x_scale="jac", max_nfev=self.max_evaluations)
        status = FitStatus.CONVERGED if result.success else FitStatus.NON_CONVERGED
        if status is FitStatus.NON_CONVERGED:
            logger.warning("Weak-coupling fit did not converge", reason=result.message, evaluations=int(result.nfev))
        return WeakCouplingFit(
            parameters=unpack(result.x),
            residual_rms=float(np.sqrt(np.mean(result.fun ** 2))),
            status=status,
            iterations=int(result.nfev),
        )


# Global fitting service instance
fitting_service = FittingService()
