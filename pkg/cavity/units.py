"""Unit conversions.

Internally frequencies are angular (rad/us), lengths are um and times us.
Energies are carried as angular frequencies E/hbar, so hbar never appears.
The particle dynamics work in um, ms and um/ms; ``PER_US_TO_PER_MS``
bridges the two clocks.
"""

import math

from scipy import constants

TWO_PI = 2.0 * math.pi
PER_US_TO_PER_MS = 1.0e3
US_PER_MS = 1.0e3

# k_B / hbar expressed in rad/us per uK
KB_OVER_HBAR = constants.k / constants.hbar * 1.0e-6 * 1.0e-6


def mhz(nu):
    """Angular frequency (rad/us) of a frequency nu given in MHz."""
    return TWO_PI * nu


def khz(nu):
    return TWO_PI * nu * 1.0e-3


def to_mhz(omega):
    return omega / TWO_PI


def temperature_to_angular(temperature_uk):
    """k_B T / hbar in rad/us."""
    return KB_OVER_HBAR * temperature_uk


def angular_to_temperature(omega):
    return omega / KB_OVER_HBAR


def us_to_ms(t):
    return t / US_PER_MS
