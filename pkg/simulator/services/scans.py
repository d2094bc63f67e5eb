"""Parameter scans built on the trap physics and the dynamics."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from cavity.exceptions import NO_DECAY, UNTRAPPED, InvalidParameters
from cavity.services.core_model import (
    lorentzian_photon_number,
    n_eff_for_pulling,
    photon_number_from_saturation,
    power_for_eta,
    pulling_from_transmission,
    saturation_for_power,
)
from cavity.services.trap_physics import optimal_saturation, trapping_time_curve

from .dynamics import run_ensemble
from .traces import TAIL_FRACTION, average_traces, extract_trapping_time

logger = logging.getLogger(__name__)


@dataclass
class TrapCurve:
    """Trapping time against drive power at one cavity detuning."""

    delta_c: float
    powers_uw: np.ndarray
    saturation: np.ndarray
    tau_ms: np.ndarray
    optimal_saturation: Optional[float] = None
    optimal_tau_ms: Optional[float] = None
    optimal_power_uw: Optional[float] = None

    def columns(self):
        return {
            "power_uW": self.powers_uw,
            "saturation": self.saturation,
            "tau_ms": self.tau_ms,
            "trapped": np.isfinite(self.tau_ms),
        }


def trap_curve(powers_uw, delta_c, n_eff_u0, heating, calibration, params):
    """tau(P) through the power calibration, plus the optimum of tau(s)
    mapped back to a power."""
    powers = np.asarray(powers_uw, dtype=float)
    saturation = saturation_for_power(powers, delta_c, n_eff_u0, calibration, params)
    taus = trapping_time_curve(saturation, heating, params)
    curve = TrapCurve(delta_c, powers, np.atleast_1d(saturation), taus)

    optimum = optimal_saturation(heating, params)
    if optimum is UNTRAPPED:
        logger.warning("no trapping at any saturation for this heating model")
        return curve
    s_best, tau_best = optimum
    n = photon_number_from_saturation(s_best, params)
    # eta^2 = n ((Delta_C - N_eff U0)^2 + kappa^2)
    unit = lorentzian_photon_number(1.0, delta_c, n_eff_u0, params.kappa)
    eta = math.sqrt(n / unit)
    curve.optimal_saturation = s_best
    curve.optimal_tau_ms = tau_best
    curve.optimal_power_uw = power_for_eta(eta, calibration, params)
    return curve


@dataclass
class AtomNumberScan:
    n_atoms: np.ndarray
    tau_ms: np.ndarray
    spearman_rho: float
    spearman_pvalue: float
    n_eff_calibrated: Optional[np.ndarray] = None

    def columns(self):
        columns = {"n_atoms": self.n_atoms, "tau_ms": self.tau_ms}
        if self.n_eff_calibrated is not None:
            columns["n_eff_calibrated"] = self.n_eff_calibrated
        return columns


def calibrated_n_eff(trace, delta_c, params, tail_fraction=TAIL_FRACTION):
    """Effective atom number read off the transmission at drive-on.

    The transmission at ``signal_start`` over the empty-cavity level (the
    median of the last ``tail_fraction`` of the record) gives the pulling
    N_eff U0 of the cloud the drive first sees. NaN when that ratio has no
    pulling root, e.g. the cloud has not left by the end of the record.
    """
    start = min(int(np.searchsorted(trace.times, trace.signal_start)), len(trace) - 1)
    n_tail = max(1, int(round(tail_fraction * len(trace))))
    empty = float(np.median(trace.photon_number[-n_tail:]))
    if empty <= 0:
        return float("nan")
    ratio = trace.photon_number[start] / empty
    try:
        pulling = pulling_from_transmission(ratio, delta_c, params.kappa)
    except InvalidParameters as exc:
        logger.warning("no atom-number calibration from this trace: %s", exc)
        return float("nan")
    return float(n_eff_for_pulling(pulling, params))


def scan_atom_number(
    config,
    drive,
    params,
    atom_numbers,
    n_trajectories,
    threads=1,
    calibration=None,
    progress=False,
):
    """Averaged-trace trapping time for each total atom number at fixed
    drive, with the N_eff the drive-on transmission calibrates to. NaN marks
    traces that never decay to the tail level."""
    atom_numbers = np.asarray(atom_numbers, dtype=float)
    if atom_numbers.size < 2:
        raise InvalidParameters("an atom-number scan needs at least 2 points")
    taus = np.full(len(atom_numbers), np.nan)
    n_eff = np.full(len(atom_numbers), np.nan)
    for i, n_atoms in enumerate(atom_numbers):
        traces = run_ensemble(
            replace(config, n_atoms=float(n_atoms)),
            drive,
            params,
            n_trajectories,
            threads=threads,
            calibration=calibration,
            progress=progress,
        )
        averaged = average_traces(traces)
        tau = extract_trapping_time(averaged)
        if tau is not NO_DECAY:
            taus[i] = tau
        n_eff[i] = calibrated_n_eff(averaged, drive.delta_c, params)
        logger.info(
            "N = %.4g: trapping time %s, calibrated N_eff %.4g", n_atoms, tau, n_eff[i]
        )

    finite = np.isfinite(taus)
    if np.count_nonzero(finite) >= 2:
        result = stats.spearmanr(atom_numbers[finite], taus[finite])
        rho, pvalue = float(result[0]), float(result[1])
    else:
        rho, pvalue = float("nan"), float("nan")
    return AtomNumberScan(atom_numbers, taus, rho, pvalue, n_eff)
