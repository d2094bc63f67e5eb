"""Scalar trap physics: dipole trap depth, recoil heating and trapping-time
estimates as functions of the antinode saturation s.

Energies are angular frequencies (E / hbar, rad/us); heating rates are in
rad^2/us^2; trapping times are returned in ms.
"""

import logging
import math

import numpy as np
from scipy import optimize

from ..exceptions import UNTRAPPED, InvalidParameters
from ..units import us_to_ms

logger = logging.getLogger(__name__)

RECOIL_PREFACTOR = 3.0 / 10.0
# recoil heating shares of the two axes transverse to the cavity; the
# smaller one is along the atomic polarization. The cavity axis is excluded.
RECOIL_AXIS_SHARES = (2.0 / 5.0, 1.0 / 5.0)

OPTIMUM_GRID_POINTS = 400
DEFAULT_S_MAX = 1.0e3


def _check_saturation(s):
    if np.any(np.asarray(s) < 0):
        raise InvalidParameters(f"saturation must be >= 0, got {s}")


def _saturating(s):
    return s / (1.0 + s)


def trap_depth(s, params, saturating=False):
    """V_dip / hbar = |Delta_A| s, or |Delta_A| s / (1 + s) when
    ``saturating`` is set."""
    _check_saturation(s)
    x = _saturating(s) if saturating else s
    return abs(params.delta_a) * x


def recoil_heating_rate(s, params, saturating=False):
    """D / hbar = (3/10) omega_rec gamma s."""
    _check_saturation(s)
    x = _saturating(s) if saturating else s
    return RECOIL_PREFACTOR * params.omega_rec * params.gamma * x


def recoil_heating_split(s, params):
    """Per-axis recoil heating rates for the two transverse axes."""
    _check_saturation(s)
    base = params.omega_rec * params.gamma * s
    return tuple(share * base for share in RECOIL_AXIS_SHARES)


def ideal_trapping_time(params):
    """Depth over recoil heating rate, (10/3) |Delta_A| / (gamma omega_rec),
    in ms. Independent of the light intensity."""
    tau_us = abs(params.delta_a) / (
        RECOIL_PREFACTOR * params.gamma * params.omega_rec
    )
    return us_to_ms(tau_us)


def _heating_unit(params):
    return RECOIL_PREFACTOR * params.gamma * params.omega_rec


def saturation_threshold(heating, params):
    """Smallest s at which the saturating depth exceeds k_B T, or None if
    the trap can never beat the thermal energy."""
    depth_max = abs(params.delta_a)
    if heating.temperature >= depth_max:
        return None
    return heating.temperature / (depth_max - heating.temperature)


def empirical_trapping_time(s, heating, params):
    """Trapping time with saturation, thermal energy and the empirical
    D0 + D1 s heating, in ms; ``UNTRAPPED`` when the depth does not exceed
    k_B T."""
    _check_saturation(s)
    x = _saturating(s)
    numerator = abs(params.delta_a) * x - heating.temperature
    if numerator <= 0:
        return UNTRAPPED
    denominator = _heating_unit(params) * (x + heating.d0 + heating.d1 * s)
    return us_to_ms(numerator / denominator)


def trapping_time_curve(s, heating, params):
    """Vectorized ``empirical_trapping_time``; NaN marks untrapped points."""
    s = np.asarray(s, dtype=float)
    _check_saturation(s)
    x = _saturating(s)
    numerator = abs(params.delta_a) * x - heating.temperature
    denominator = _heating_unit(params) * (x + heating.d0 + heating.d1 * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = us_to_ms(numerator / denominator)
    return np.where(numerator > 0, tau, np.nan)


def optimal_saturation(heating, params, s_max=DEFAULT_S_MAX, rel_tol=1e-6):
    """Saturation maximizing the empirical trapping time on
    (threshold, s_max], and the maximal time in ms.

    A log-spaced scan brackets the maximum, which a bounded Brent search
    (golden section with parabolic steps) refines in log s.
    """
    threshold = saturation_threshold(heating, params)
    if threshold is None or threshold >= s_max:
        return UNTRAPPED
    s_lo = max(threshold * (1.0 + 1e-9), 1e-12)
    grid = np.linspace(math.log(s_lo), math.log(s_max), OPTIMUM_GRID_POINTS)
    tau = trapping_time_curve(np.exp(grid), heating, params)
    if not np.any(np.isfinite(tau) & (tau > 0)):
        return UNTRAPPED
    tau = np.where(np.isfinite(tau), tau, -np.inf)
    idx = int(np.argmax(tau))
    if np.ptp(tau[np.isfinite(tau)]) <= 1e-12 * abs(tau[idx]):
        # flat: no intensity dependence left (ideal limit)
        return float(np.exp(grid[idx])), float(tau[idx])

    def negative_tau(u):
        value = empirical_trapping_time(math.exp(u), heating, params)
        return 0.0 if value is UNTRAPPED else -value

    lo = grid[max(idx - 1, 0)]
    hi = grid[min(idx + 1, len(grid) - 1)]
    result = optimize.minimize_scalar(
        negative_tau,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": rel_tol * 1e-2},
    )
    u_best, tau_best = float(result.x), -float(result.fun)
    if tau_best < tau[idx]:
        u_best, tau_best = float(grid[idx]), float(tau[idx])
    logger.debug(
        "optimal saturation %.6g -> tau %.6g ms", math.exp(u_best), tau_best
    )
    return math.exp(u_best), tau_best
