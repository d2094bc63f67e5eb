"""Dispersive steady state of the driven cavity with atoms.

The field is eliminated adiabatically: for a given atom distribution the
intracavity photon number is the Lorentzian of the pulled resonance,

    n = eta^2 / ((Delta_C - N_eff U0)^2 + kappa^2).

All functions are pure and accept numpy arrays where a scalar is shown.
"""

import math

import numpy as np

from ..exceptions import InvalidParameters
from ..params import Calibration, DriveConfig, FieldObservables


# --- Mode geometry ---
def mode_function(r, params):
    """f(r) = cos(k x) exp(-(y^2 + z^2) / w^2) for positions r (..., 3) um."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return np.cos(params.wavenumber * x) * np.exp(
        -(y**2 + z**2) / params.waist**2
    )


def effective_atom_number(state, params):
    """N_eff = sum_j w_j f(r_j)^2 over the macro-particles of ``state``."""
    if len(state) == 0:
        return 0.0
    f = mode_function(state.positions, params)
    return float(np.sum(state.weights * f * f))


# --- Dispersive coupling ---
def light_shift_u0(params):
    """Per-atom, per-photon shift U0 = factor * g^2 Delta_A / (Delta_A^2 +
    gamma^2), in rad/us. Negative for red detuning."""
    if params.delta_a == 0:
        raise InvalidParameters(
            "delta_A = 0: the dispersive model does not apply on resonance"
        )
    return (
        params.u0_factor
        * params.g**2
        * params.delta_a
        / (params.delta_a**2 + params.gamma**2)
    )


def lorentzian_photon_number(eta, delta_c, n_eff_u0, kappa):
    """Bare Lorentzian; the hot path of the dynamics loop uses this."""
    detuning = delta_c - n_eff_u0
    return eta * eta / (detuning * detuning + kappa * kappa)


def steady_state_photon_number(drive, n_eff_u0, params):
    """Stationary <a^dag a> for a drive and a total pulling N_eff U0."""
    return lorentzian_photon_number(
        drive.require_eta(), drive.delta_c, n_eff_u0, params.kappa
    )


def intensity_change(drive, n_eff_u0, params):
    """Photon-number change between the atom-filled and the empty cavity,
    in the factorized closed form."""
    eta = drive.require_eta()
    delta_c = drive.delta_c
    kappa2 = params.kappa**2
    empty = eta**2 / (delta_c**2 + kappa2)
    return (
        empty
        * (2.0 * delta_c - n_eff_u0)
        * n_eff_u0
        / ((delta_c - n_eff_u0) ** 2 + kappa2)
    )


def empty_cavity_photon_number(drive, params):
    return steady_state_photon_number(drive, 0.0, params)


def normalized_transmission(photon_number, eta, kappa):
    """Photon number relative to the resonant empty-cavity value
    eta^2 / kappa^2; zero when the drive is off."""
    photon_number = np.asarray(photon_number, dtype=float)
    if eta == 0:
        return np.zeros_like(photon_number)
    return photon_number * kappa**2 / eta**2


def pulling_from_transmission(ratio, delta_c, kappa):
    """Total pulling N_eff U0 (rad/us) from the transmission with atoms
    relative to the empty cavity at the same drive.

    Of the two roots of the Lorentzian this returns the one between
    ``delta_c`` and zero, the resonance pulled toward the drive but not
    past it. There the ratio runs from 1 (no atoms) to
    (delta_c^2 + kappa^2) / kappa^2 (pulled onto the drive).
    """
    if delta_c == 0:
        raise InvalidParameters("the pulling cannot be read on resonance")
    ratio = np.asarray(ratio, dtype=float)
    peak = (delta_c**2 + kappa**2) / kappa**2
    if np.any(~np.isfinite(ratio)) or np.any(ratio < 1) or np.any(
        ratio > peak * (1 + 1e-12)
    ):
        raise InvalidParameters(
            f"transmission ratio must lie in [1, {peak:.6g}], got {ratio}"
        )
    offset = np.sqrt(np.clip((delta_c**2 + kappa**2) / ratio - kappa**2, 0.0, None))
    pulling = delta_c - math.copysign(1.0, delta_c) * offset
    return float(pulling) if pulling.ndim == 0 else pulling


# --- Saturation ---
def saturation_from_photon_number(photon_number, params):
    """Antinode saturation s = g^2 n / (Delta_A^2 + gamma^2)."""
    n = np.asarray(photon_number, dtype=float)
    if np.any(n < 0):
        raise InvalidParameters("photon number must be >= 0")
    s = params.g**2 * n / (params.delta_a**2 + params.gamma**2)
    return float(s) if s.ndim == 0 else s


def photon_number_from_saturation(saturation, params):
    return saturation * (params.delta_a**2 + params.gamma**2) / params.g**2


def field_observables(drive, n_eff_u0, params):
    n = steady_state_photon_number(drive, n_eff_u0, params)
    return FieldObservables(
        photon_number=float(n),
        pulled_detuning=drive.delta_c - n_eff_u0,
        saturation_max=saturation_from_photon_number(n, params),
    )


# --- Power calibration ---
def _eta_squared_per_uw(calibration, params):
    """Slope of the linear map P -> eta^2 fixed by the anchor point."""
    n_anchor = photon_number_from_saturation(
        calibration.anchor_saturation, params
    )
    detuning = calibration.anchor_delta_c - calibration.anchor_n_eff_u0
    eta2_anchor = n_anchor * (detuning**2 + params.kappa**2)
    return eta2_anchor / calibration.anchor_power_uw


def calibrate_power_to_drive(power_uw, calibration, params):
    """Drive amplitude eta (rad/us) for a power in uW; eta grows as sqrt(P)."""
    power = np.asarray(power_uw, dtype=float)
    if np.any(power < 0):
        raise InvalidParameters(f"power must be >= 0 uW, got {power_uw}")
    eta = np.sqrt(power * _eta_squared_per_uw(calibration, params))
    return float(eta) if eta.ndim == 0 else eta


def power_for_eta(eta, calibration, params):
    """Inverse of ``calibrate_power_to_drive``."""
    if eta < 0:
        raise InvalidParameters(f"eta must be >= 0, got {eta}")
    return eta**2 / _eta_squared_per_uw(calibration, params)


def resolve_drive(drive, params, calibration=None):
    """Return ``drive`` with eta set, calibrating a power if needed."""
    if drive.eta is not None:
        return drive
    calibration = calibration or Calibration()
    return DriveConfig(
        delta_c=drive.delta_c,
        eta=calibrate_power_to_drive(drive.power_uw, calibration, params),
    )


def n_eff_for_pulling(n_eff_u0, params):
    """Effective atom number giving a total pulling N_eff U0."""
    u0 = light_shift_u0(params)
    return n_eff_u0 / u0


def saturation_for_power(power_uw, delta_c, n_eff_u0, calibration, params):
    """Antinode saturation reached with ``power_uw`` at a drive detuning
    and total pulling, through the power calibration."""
    eta = calibrate_power_to_drive(power_uw, calibration, params)
    n = lorentzian_photon_number(eta, delta_c, n_eff_u0, params.kappa)
    return saturation_from_photon_number(n, params)
