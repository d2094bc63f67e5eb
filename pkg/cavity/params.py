"""Value objects describing the atom-cavity system, its drive and the
simulated atom cloud.

Frequencies are angular (rad/us); lengths um. See ``cavity.units``.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import InvalidParameters
from .units import TWO_PI, PER_US_TO_PER_MS, khz, mhz, temperature_to_angular

logger = logging.getLogger(__name__)

# below this |delta_A| / gamma the dispersive picture is questionable
DISPERSIVE_RATIO_WARNING = 100.0


@dataclass(frozen=True)
class SystemParams:
    kappa: float
    g: float
    gamma: float
    delta_a: float
    u0_factor: float = 0.7
    omega_rec: float = khz(3.771)
    wavelength: float = 0.780
    waist: float = 127.0
    # um/ms^2, pointing along -z (transverse to the cavity axis x)
    gravity: float = 9.81
    # documentation only; the mode is treated as infinitely long
    cavity_length: float = 15000.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidParameters(f"kappa must be > 0, got {self.kappa}")
        if self.gamma <= 0:
            raise InvalidParameters(f"gamma must be > 0, got {self.gamma}")
        if self.omega_rec <= 0:
            raise InvalidParameters(
                f"omega_rec must be > 0, got {self.omega_rec}"
            )
        if self.waist <= 0:
            raise InvalidParameters(f"waist must be > 0, got {self.waist}")
        if self.wavelength <= 0:
            raise InvalidParameters(
                f"wavelength must be > 0, got {self.wavelength}"
            )
        if not 0 < self.u0_factor <= 1:
            raise InvalidParameters(
                f"u0_factor must lie in (0, 1], got {self.u0_factor}"
            )
        if abs(self.delta_a) < DISPERSIVE_RATIO_WARNING * self.gamma:
            logger.warning(
                "|delta_A| = %.4g rad/us is less than %d gamma; "
                "the dispersive model may not hold",
                abs(self.delta_a),
                DISPERSIVE_RATIO_WARNING,
            )

    @classmethod
    def published(cls, **overrides):
        """87Rb D2 line in the 15 mm cavity of the experiment."""
        values = dict(
            kappa=mhz(2.77),
            g=mhz(0.33),
            gamma=mhz(3.03),
            delta_a=mhz(-1066.0),
        )
        values.update(overrides)
        return cls(**values)

    @property
    def wavenumber(self):
        """k in 1/um."""
        return TWO_PI / self.wavelength

    @property
    def hbar_over_m(self):
        """hbar/m in um^2/ms, from omega_rec = hbar k^2 / 2m."""
        return (
            2.0 * self.omega_rec * PER_US_TO_PER_MS / self.wavenumber**2
        )

    def with_changes(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class DriveConfig:
    """Laser drive: detuning from the empty cavity plus one intensity
    specifier, either the amplitude eta (rad/us) or a power in uW."""

    delta_c: float
    eta: Optional[float] = None
    power_uw: Optional[float] = None

    def __post_init__(self):
        if (self.eta is None) == (self.power_uw is None):
            raise InvalidParameters(
                "exactly one of eta or power_uw must be given"
            )
        if self.eta is not None and self.eta < 0:
            raise InvalidParameters(f"eta must be >= 0, got {self.eta}")
        if self.power_uw is not None and self.power_uw < 0:
            raise InvalidParameters(
                f"power_uw must be >= 0, got {self.power_uw}"
            )

    @classmethod
    def from_ratio(cls, delta_c, eta_over_kappa, params):
        return cls(delta_c=delta_c, eta=eta_over_kappa * params.kappa)

    def require_eta(self):
        if self.eta is None:
            raise InvalidParameters(
                "drive is specified by power; calibrate it to eta first"
            )
        return self.eta

    def with_eta(self, eta):
        return DriveConfig(delta_c=self.delta_c, eta=eta)


@dataclass(frozen=True)
class Calibration:
    """Single-point power calibration: anchor power (uW) produces the
    anchor saturation at the anchor operating detuning."""

    anchor_power_uw: float = 0.7
    anchor_saturation: float = 0.02
    anchor_delta_c: float = mhz(-2.0)
    anchor_n_eff_u0: float = mhz(-1.0)

    def __post_init__(self):
        if self.anchor_power_uw <= 0:
            raise InvalidParameters(
                f"anchor power must be > 0, got {self.anchor_power_uw}"
            )
        if self.anchor_saturation <= 0:
            raise InvalidParameters(
                "anchor saturation must be > 0, "
                f"got {self.anchor_saturation}"
            )


@dataclass(frozen=True)
class HeatingModel:
    """Empirical heating D0 + D1 s, in units of (3/10) hbar omega_rec gamma,
    and the cloud temperature k_B T / hbar in rad/us."""

    d0: float = 0.0
    d1: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.d0 < 0 or self.d1 < 0:
            raise InvalidParameters(
                f"heating coefficients must be >= 0, got {self.d0}, {self.d1}"
            )
        if self.temperature < 0:
            raise InvalidParameters(
                f"temperature must be >= 0, got {self.temperature}"
            )

    @classmethod
    def from_microkelvin(cls, d0, d1, temperature_uk):
        return cls(d0=d0, d1=d1, temperature=temperature_to_angular(temperature_uk))


@dataclass(frozen=True)
class FieldObservables:
    photon_number: float
    pulled_detuning: float
    saturation_max: float

    def __post_init__(self):
        if self.photon_number < 0 or self.saturation_max < 0:
            raise InvalidParameters("field observables must be non-negative")


@dataclass
class EnsembleState:
    """Weighted macro-particle cloud.

    positions: (n, 3) um, x along the cavity axis, z vertical.
    velocities: (n, 3) um/ms.
    weights: (n,) physical atoms per macro-particle.
    time: ms.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(
            -1, 3
        )
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        n = len(self.weights)
        if self.positions.shape[0] != n or self.velocities.shape[0] != n:
            raise InvalidParameters(
                "positions, velocities and weights must have equal length"
            )
        if n and not np.all(self.weights > 0):
            raise InvalidParameters("all macro-particle weights must be > 0")

    @property
    def atom_number(self):
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)

    def copy(self):
        return EnsembleState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            weights=self.weights.copy(),
            time=self.time,
        )

    @classmethod
    def single(cls, position, velocity=(0.0, 0.0, 0.0), weight=1.0, time=0.0):
        return cls(
            positions=np.array([position], dtype=float),
            velocities=np.array([velocity], dtype=float),
            weights=np.array([weight], dtype=float),
            time=time,
        )


