"""Least-squares fits of the heating model to trapping-time curves and of
the collapse model to transmission decays, plus a non-exponentiality
diagnostic."""

import logging
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy import optimize

from cavity.exceptions import DegenerateData, InvalidParameters
from cavity.params import Calibration, HeatingModel
from cavity.services.core_model import saturation_for_power
from cavity.services.trap_physics import RECOIL_PREFACTOR, trapping_time_curve
from cavity.units import US_PER_MS, temperature_to_angular

from .collapse import DecayModelParams, mean_decay_curve, mean_field_fraction
from .optimizer import N_STARTS, FitResult, minimize
from .traces import TransmissionTrace

logger = logging.getLogger(__name__)

MIN_HEATING_POINTS = 4
HEATING_NAMES = ("d0", "d1")

COLLAPSE_NAMES = ("delta_c_tilde", "n0_u0_tilde", "a_param", "tau")
# negative detuning and pulling fix the (D, u) -> (-D, -u) symmetry of the
# Lorentzian
COLLAPSE_BOUNDS = [(-10.0, 0.0), (-10.0, 0.0), (0.0, 20.0), (1e-9, None)]
TRANSMISSION = "transmission"
ATOM_NUMBER = "atom_number"

# a decay must exceed this many noise widths to be fitted
DEGENERACY_FACTOR = 5.0
NONEXPONENTIAL_THRESHOLD = 2.0
PRECISION_FLOOR = 1e-9
EXPONENTIAL_GRID_POINTS = 200


# --- Heating coefficients ---
def fit_heating_coefficients(
    powers_uw,
    taus_ms,
    params,
    temperature_uk,
    delta_c,
    n_eff_u0,
    calibration=None,
    n_starts=N_STARTS,
    threads=1,
) -> FitResult:
    """Fit (d0, d1) >= 0 of the empirical trapping-time law to measured
    (power, tau) pairs. Untrapped points carry NaN or a non-positive tau
    and are left out."""
    powers = np.asarray(powers_uw, dtype=float)
    taus = np.asarray(taus_ms, dtype=float)
    if powers.shape != taus.shape:
        raise InvalidParameters("powers and trapping times differ in length")
    trapped = np.isfinite(taus) & (taus > 0)
    if not np.any(trapped):
        raise DegenerateData("all data points are untrapped")
    if np.count_nonzero(trapped) < MIN_HEATING_POINTS:
        raise DegenerateData(
            f"need at least {MIN_HEATING_POINTS} trapped points, "
            f"got {np.count_nonzero(trapped)}"
        )
    calibration = calibration or Calibration()
    s = saturation_for_power(powers[trapped], delta_c, n_eff_u0, calibration, params)
    tau = taus[trapped]
    temperature = temperature_to_angular(temperature_uk)

    # tau is linear in (d0, d1) after inversion:
    # (|Delta_A| x - k_B T) / (C tau) - x = d0 + d1 s, x = s / (1 + s)
    x = s / (1.0 + s)
    unit = RECOIL_PREFACTOR * params.gamma * params.omega_rec
    target = (abs(params.delta_a) * x - temperature) / (unit * tau * US_PER_MS) - x
    design = np.column_stack([np.ones_like(s), s])
    initial, *_ = np.linalg.lstsq(design, target, rcond=None)
    initial = np.clip(initial, 0.0, None)

    def objective(theta):
        heating = HeatingModel(
            d0=max(theta[0], 0.0), d1=max(theta[1], 0.0), temperature=temperature
        )
        model = np.nan_to_num(trapping_time_curve(s, heating, params), nan=0.0)
        return float(np.sum((model - tau) ** 2))

    result = minimize(
        objective,
        initial,
        bounds=[(0.0, None), (0.0, None)],
        names=HEATING_NAMES,
        n_starts=n_starts,
        threads=threads,
    )
    result.residual_rms = math.sqrt(result.objective / len(tau))
    result.diagnostics.update(
        n_points=int(len(tau)),
        n_untrapped=int(np.count_nonzero(~trapped)),
        linear_guess=[float(v) for v in initial],
    )
    logger.info(
        "heating fit d0=%.6g d1=%.6g rms=%.3g ms",
        result.parameters["d0"], result.parameters["d1"], result.residual_rms,
    )
    return result


# --- Collapse model ---
def collapse_shape(times, theta, observable=TRANSMISSION):
    """Unscaled model curve: the normalized photon number for
    ``TRANSMISSION``, n(t) / n0 for ``ATOM_NUMBER``."""
    delta_c_tilde, n0_u0_tilde, a_param, tau = theta
    fraction = mean_field_fraction(times, delta_c_tilde, n0_u0_tilde, a_param, tau)
    if observable == ATOM_NUMBER:
        return fraction
    return 1.0 / ((delta_c_tilde - fraction * n0_u0_tilde) ** 2 + 1.0)


def _project(shape, values):
    """Best amplitude and offset for ``shape``, and the residual sum of
    squares."""
    design = np.column_stack([shape, np.ones_like(shape)])
    coefficients, *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = values - design @ coefficients
    return coefficients, float(residual @ residual)


def _series(data):
    if isinstance(data, TransmissionTrace):
        keep = data.times >= data.signal_start
        return data.times[keep], data.transmission_norm[keep]
    times, values = data
    return np.asarray(times, dtype=float), np.asarray(values, dtype=float)


def noise_level(values):
    """Robust white-noise width from second differences."""
    if len(values) < 3:
        return 0.0
    second = np.diff(values, 2)
    mad = np.median(np.abs(second - np.median(second)))
    return 1.4826 * mad / math.sqrt(6.0)


def _check_decay(values):
    if len(values) < 10:
        raise DegenerateData(f"need at least 10 samples, got {len(values)}")
    head = np.median(values[: max(1, len(values) // 20)])
    tail = np.median(values[-max(1, len(values) // 10):])
    drop = abs(head - tail)
    noise = noise_level(values)
    if drop == 0 or drop <= DEGENERACY_FACTOR * noise:
        raise DegenerateData(
            f"no decay above noise: drop {drop:.3g}, noise {noise:.3g}"
        )
    return head, tail


def _half_time(times, values, head, tail):
    midpoint = 0.5 * (head + tail)
    crossed = np.nonzero((values - midpoint) * np.sign(head - tail) <= 0)[0]
    if crossed.size == 0 or times[crossed[0]] <= 0:
        return max(times[-1] / 2.0, 1e-9)
    return float(times[crossed[0]])


def fit_collapse_model(
    data,
    observable=TRANSMISSION,
    initial=None,
    n_starts=N_STARTS,
    threads=1,
    monte_carlo_check=False,
    n0=10_000,
    n_trajectories=10,
    seed=0,
) -> FitResult:
    """Fit (D, N(0) u, A, tau) of the mean-field collapse curve to a decay.

    ``data`` is a TransmissionTrace or a (times, values) pair; time starts
    at the first sample. Amplitude and offset are projected out at every
    evaluation, so traces in arbitrary units fit alike. With
    ``monte_carlo_check`` the fitted model is re-simulated with ``n0``
    atoms and the sup-norm gap to the mean-field curve is reported.
    """
    times, values = _series(data)
    head, tail = _check_decay(values)
    times = times - times[0]
    center = float(np.median(values))
    scale = float(np.ptp(values))
    normalized = (values - center) / scale

    t_half = _half_time(times, values, head, tail)
    if initial is None:
        initial = (-0.5, -0.5, 1.0, t_half)
    box = [(-3.0, 0.0), (-3.0, 0.0), (0.0, 6.0), (0.01 * t_half, 3.0 * t_half)]

    def objective(theta):
        return _project(collapse_shape(times, theta, observable), normalized)[1]

    result = minimize(
        objective,
        initial,
        bounds=COLLAPSE_BOUNDS,
        names=COLLAPSE_NAMES,
        n_starts=n_starts,
        start_box=box,
        threads=threads,
    )
    theta = result.vector(COLLAPSE_NAMES)
    (amplitude, offset), _ = _project(
        collapse_shape(times, theta, observable), normalized
    )
    result.residual_rms = math.sqrt(result.objective / len(values)) * scale
    result.diagnostics.update(
        amplitude=float(amplitude * scale),
        offset=float(offset * scale + center),
        n_points=int(len(values)),
        observable=observable,
    )
    if monte_carlo_check:
        result.diagnostics["monte_carlo_sup_deviation"] = _monte_carlo_gap(
            theta, times[-1], n0, n_trajectories, seed
        )
    return result


def collapse_model_curve(times, result, observable=TRANSMISSION):
    """Fitted curve in the units of the fitted data."""
    times = np.asarray(times, dtype=float)
    shape = collapse_shape(
        times - times[0], result.vector(COLLAPSE_NAMES), observable
    )
    return (
        result.diagnostics["amplitude"] * shape + result.diagnostics["offset"]
    )


def _monte_carlo_gap(theta, t_end, n0, n_trajectories, seed):
    delta_c_tilde, n0_u0_tilde, a_param, tau = theta
    model = DecayModelParams(
        delta_c_tilde=delta_c_tilde,
        u0_tilde=n0_u0_tilde / n0,
        n0=n0,
        a_param=a_param,
        tau=tau,
    )
    curve = mean_decay_curve(model, t_end, n_trajectories, master_seed=seed)
    gap = float(np.max(np.abs(curve.n_mean - curve.n_meanfield)) / n0)
    logger.info("Monte Carlo check: sup |<n> - n_mf| / n0 = %.3g", gap)
    return gap


def bootstrap_collapse_fit(data, n_resamples=20, seed=0, observable=TRANSMISSION):
    """Residual bootstrap of ``fit_collapse_model``: refits of the fitted
    curve plus resampled residuals, started from the best fit.

    Returns the fit and the per-parameter standard deviation.
    """
    times, values = _series(data)
    best = fit_collapse_model((times, values), observable=observable)
    fitted = collapse_model_curve(times, best, observable)
    residuals = values - fitted
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_resamples):
        resampled = fitted + rng.choice(residuals, size=len(residuals))
        refit = fit_collapse_model(
            (times, resampled),
            observable=observable,
            initial=best.vector(COLLAPSE_NAMES),
            n_starts=1,
        )
        samples.append(refit.vector(COLLAPSE_NAMES))
    spread = np.std(samples, axis=0, ddof=1)
    best.diagnostics["bootstrap_spread"] = dict(
        zip(COLLAPSE_NAMES, (float(v) for v in spread))
    )
    return best, dict(zip(COLLAPSE_NAMES, (float(v) for v in spread)))


# --- Non-exponentiality ---
@dataclass
class NonExponentialityReport:
    improvement: float
    non_exponential: bool
    exponential_rms: float
    model_rms: float
    exponential_tau: float
    model_fit: FitResult = None

    def as_dict(self) -> Dict[str, object]:
        report = {
            "improvement": self.improvement,
            "non_exponential": self.non_exponential,
            "exponential_rms": self.exponential_rms,
            "model_rms": self.model_rms,
            "exponential_tau_ms": self.exponential_tau,
        }
        if self.model_fit is not None:
            report["model_fit"] = self.model_fit.as_dict()
        return report


def fit_exponential(times, values):
    """Best a exp(-t / tau) + b; returns tau, (a, b) and the residual sum
    of squares. tau is scanned on a log grid and refined by Brent."""
    times = np.asarray(times, dtype=float) - times[0]
    span = max(times[-1], 1e-12)
    step = max(np.min(np.diff(times)), 1e-12 * span)
    log_lo, log_hi = math.log(step / 10.0), math.log(span * 100.0)

    def sse(log_tau):
        return _project(np.exp(-times / math.exp(log_tau)), values)[1]

    grid = np.linspace(log_lo, log_hi, EXPONENTIAL_GRID_POINTS)
    costs = [sse(u) for u in grid]
    idx = int(np.argmin(costs))
    lo = grid[max(idx - 1, 0)]
    hi = grid[min(idx + 1, len(grid) - 1)]
    refined = optimize.minimize_scalar(
        sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    log_tau = float(refined.x) if refined.fun <= costs[idx] else float(grid[idx])
    tau = math.exp(log_tau)
    coefficients, cost = _project(np.exp(-times / tau), values)
    return tau, coefficients, cost


def nonexponentiality_test(
    data, threshold=NONEXPONENTIAL_THRESHOLD, observable=TRANSMISSION
) -> NonExponentialityReport:
    """Compare the best single exponential with the mean-field collapse
    model. The verdict is non-exponential when the residual rms improves
    by more than ``threshold``."""
    times, values = _series(data)
    _check_decay(values)
    scale = float(np.ptp(values))
    normalized = (values - np.median(values)) / scale
    tau_exp, _, cost = fit_exponential(times, normalized)
    exponential_rms = math.sqrt(cost / len(values))
    if exponential_rms <= PRECISION_FLOOR:
        return NonExponentialityReport(
            improvement=1.0,
            non_exponential=False,
            exponential_rms=exponential_rms * scale,
            model_rms=exponential_rms * scale,
            exponential_tau=tau_exp,
        )
    model_fit = fit_collapse_model((times, values), observable=observable)
    model_rms = model_fit.residual_rms / scale
    improvement = exponential_rms / max(model_rms, PRECISION_FLOOR * 1e-3)
    verdict = improvement > threshold
    logger.info(
        "exponential rms %.3g, collapse model rms %.3g: improvement %.3g",
        exponential_rms, model_rms, improvement,
    )
    return NonExponentialityReport(
        improvement=float(improvement),
        non_exponential=bool(verdict),
        exponential_rms=exponential_rms * scale,
        model_rms=model_rms * scale,
        exponential_tau=tau_exp,
        model_fit=model_fit,
    )
