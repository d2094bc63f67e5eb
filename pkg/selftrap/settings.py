"""
Django settings for the selftrap project.

selftrap has no web surface: Django provides the settings layer, the
management-command CLI, form-based config validation and the test runner.

Physics defaults are the published values of the experiment (cavity
linewidth, coupling, atomic detuning, mode waist, cloud temperature) plus
the 87Rb D2 constants the model needs. Every key carries its unit suffix;
frequencies are plain nu in MHz (2*pi is applied internally).
"""

import os
from pathlib import Path

if os.path.isfile("env.py"):
    # load local environment overrides (env.py sets os.environ keys)
    # e.g. SELFTRAP_LOG_LEVEL, SELFTRAP_THREADS for local development
    import env  # noqa: F401

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Not used for any signing; Django only requires it to be set.
SECRET_KEY = os.environ.get("SECRET_KEY", "selftrap-local-only")

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    "cavity",
    "simulator",
]

# No ORM models: runs are recorded as JSON manifests next to their outputs.
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

SELFTRAP_LOG_LEVEL = os.environ.get("SELFTRAP_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "cavity": {
            "handlers": ["console"],
            "level": SELFTRAP_LOG_LEVEL,
            "propagate": False,
        },
        "simulator": {
            "handlers": ["console"],
            "level": SELFTRAP_LOG_LEVEL,
            "propagate": False,
        },
    },
}


# Simulation defaults

SELFTRAP_THREADS = int(os.environ.get("SELFTRAP_THREADS", "1"))

SELFTRAP_DEFAULTS = {
    # atom-cavity system
    "kappa_MHz": 2.77,
    "g_MHz": 0.33,
    "gamma_MHz": 3.03,
    "delta_A_MHz": -1066.0,
    "u0_factor": 0.7,
    "omega_rec_kHz": 3.771,
    "wavelength_um": 0.780,
    "waist_um": 127.0,
    "cavity_length_mm": 15.0,
    "gravity_um_per_ms2": 9.81,
    # drive (self-trapping operating point)
    "delta_C_MHz": -3.0,
    "eta_over_kappa": 620.0,
    "power_uW": 0.0,
    "n_eff_u0_MHz": -1.0,
    # power calibration anchor
    "anchor_power_uW": 0.7,
    "anchor_saturation": 0.02,
    "anchor_delta_C_MHz": -2.0,
    "anchor_n_eff_u0_MHz": -1.0,
    # protocol
    "temperature_uK": 100.0,
    "cloud_sigma_um": 1000.0,
    "transverse_window_um": 0.0,
    "release_time_ms": 0.0,
    "drive_on_ms": 3.0,
    "shutter_ramp_ms": 0.2,
    "record_until_ms": 30.0,
    "dt_us": 0.0,
    "sample_every_us": 5.0,
    # "auto" derives the atom number from n_eff_u0_MHz
    "n_atoms": "auto",
    "n_macroparticles": 2000,
    "seed": 0,
    # empirical heating (units of 3/10 hbar omega_rec gamma)
    "d0": 0.475,
    "d1": 0.759,
}

# Heating coefficients fitted to the trapping-time curves, keyed by the
# cavity detuning Delta_C / 2pi in MHz.
SELFTRAP_FITTED_HEATING = {
    -1.0: (0.475, 0.759),
    -2.0: (0.627, 1.12),
    -3.0: (0.884, 1.32),
}
