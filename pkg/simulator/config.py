"""Flat ``key = value`` run configuration.

Keys carry their unit suffix (``kappa_MHz``, ``waist_um``, ...). Lines
starting with ``#`` and trailing ``# ...`` are comments. Unset keys take
their value from ``settings.SELFTRAP_DEFAULTS``; the merged set is
validated by ``ConfigForm``.
"""

import difflib
import logging
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from cavity.exceptions import ConfigError
from cavity.params import Calibration, DriveConfig, HeatingModel, SystemParams
from cavity.units import khz, mhz

from .forms import ConfigForm
from .services.dynamics import ProtocolConfig, atoms_for_pulling

logger = logging.getLogger(__name__)

# keys without a physical unit
DIMENSIONLESS_KEYS = {
    "u0_factor",
    "eta_over_kappa",
    "anchor_saturation",
    "n_atoms",
    "n_macroparticles",
    "seed",
    "d0",
    "d1",
}
# "defaults" in place of a path runs on the built-in values only
DEFAULTS_NAME = "defaults"


def _check_key(key, line):
    defaults = settings.SELFTRAP_DEFAULTS
    if key in defaults:
        return
    suffixed = [k for k in defaults if k.startswith(key + "_")]
    if suffixed and key not in DIMENSIONLESS_KEYS:
        raise ConfigError(
            f"'{key}' is missing its unit suffix (expected '{suffixed[0]}')", line
        )
    close = difflib.get_close_matches(key, list(defaults), n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    raise ConfigError(f"unknown key '{key}'{hint}", line)


def read_config_lines(text):
    """``{key: (value, line)}`` from the text of a config file."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        _check_key(key, lineno)
        if key in entries:
            raise ConfigError(
                f"'{key}' already set on line {entries[key][1]}", lineno
            )
        entries[key] = (value, lineno)
    return entries


def parse_config(path=None, overrides=None):
    """Validated configuration dict from a file and ``key=value`` overrides.

    Overrides win over the file; both win over the defaults.
    """
    entries = {}
    if path and str(path) != DEFAULTS_NAME:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        entries = read_config_lines(text)
    for key, value in (overrides or {}).items():
        _check_key(key, None)
        entries[key] = (value, None)

    data = {key: str(value) for key, value in settings.SELFTRAP_DEFAULTS.items()}
    data.update({key: str(value) for key, (value, _) in entries.items()})
    form = ConfigForm(data=data)
    if not form.is_valid():
        key, errors = next(iter(form.errors.items()))
        line = entries.get(key, (None, None))[1]
        raise ConfigError(f"{key}: {' '.join(errors)}", line)
    logger.debug("config %s with %d explicit keys", path or DEFAULTS_NAME, len(entries))
    return form.cleaned_data


def parse_overrides(items):
    """``["key=value", ...]`` from the command line into a dict."""
    overrides = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"expected key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    return overrides


# --- Builders ---
def system_params(config):
    return SystemParams(
        kappa=mhz(config["kappa_MHz"]),
        g=mhz(config["g_MHz"]),
        gamma=mhz(config["gamma_MHz"]),
        delta_a=mhz(config["delta_A_MHz"]),
        u0_factor=config["u0_factor"],
        omega_rec=khz(config["omega_rec_kHz"]),
        wavelength=config["wavelength_um"],
        waist=config["waist_um"],
        gravity=config["gravity_um_per_ms2"],
        cavity_length=config["cavity_length_mm"] * 1000.0,
    )


def calibration(config):
    return Calibration(
        anchor_power_uw=config["anchor_power_uW"],
        anchor_saturation=config["anchor_saturation"],
        anchor_delta_c=mhz(config["anchor_delta_C_MHz"]),
        anchor_n_eff_u0=mhz(config["anchor_n_eff_u0_MHz"]),
    )


def drive_config(config, params):
    """A non-zero ``power_uW`` selects the calibrated power; otherwise
    ``eta_over_kappa`` sets the amplitude."""
    delta_c = mhz(config["delta_C_MHz"])
    if config["power_uW"] > 0:
        return DriveConfig(delta_c=delta_c, power_uw=config["power_uW"])
    return DriveConfig.from_ratio(delta_c, config["eta_over_kappa"], params)


def heating_model(config):
    return HeatingModel.from_microkelvin(
        config["d0"], config["d1"], config["temperature_uK"]
    )


def protocol_config(config, params):
    """Protocol timing and cloud. ``n_atoms = auto`` picks the atom number
    that gives the configured pulling ``n_eff_u0_MHz`` at drive-on."""
    protocol = ProtocolConfig(
        release_time=config["release_time_ms"],
        drive_on_time=config["drive_on_ms"],
        shutter_ramp=config["shutter_ramp_ms"],
        record_until=config["record_until_ms"],
        dt=config["dt_us"] or None,
        sample_every=config["sample_every_us"],
        cloud_sigma=config["cloud_sigma_um"],
        temperature_uk=config["temperature_uK"],
        n_atoms=config["n_atoms"] if config["n_atoms"] is not None else 0.0,
        n_macroparticles=config["n_macroparticles"],
        transverse_window=config["transverse_window_um"],
        seed=config["seed"],
        gravity=config["gravity_um_per_ms2"] > 0,
    )
    if config["n_atoms"] is None:
        n_atoms = atoms_for_pulling(mhz(config["n_eff_u0_MHz"]), protocol, params)
        logger.info("n_atoms = auto: %.4g atoms", n_atoms)
        protocol = replace(protocol, n_atoms=n_atoms)
    return protocol
