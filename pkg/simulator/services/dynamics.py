"""Semiclassical many-atom dynamics in the adiabatically eliminated cavity
field.

Macro-particles move in the dipole potential hbar U0 n f(r)^2 of the
steady-state photon number n, and n depends on where the atoms are
through N_eff. The field is re-evaluated after every position update.

Positions are um, velocities um/ms and the clock is ms; the integration
step is configured in us. x is the cavity axis, gravity points along -z.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import stats
from tqdm import tqdm

from cavity.exceptions import InvalidParameters, NumericalInstability
from cavity.params import EnsembleState
from cavity.services.core_model import (
    light_shift_u0,
    lorentzian_photon_number,
    n_eff_for_pulling,
    resolve_drive,
)
from cavity.services.trap_physics import RECOIL_AXIS_SHARES
from cavity.units import PER_US_TO_PER_MS, US_PER_MS, temperature_to_angular

from .traces import TransmissionTrace

logger = logging.getLogger(__name__)

DEFAULT_MAX_DT_US = 0.05
STEPS_PER_AXIAL_PERIOD = 40
TRAPPED_RADIUS_WAISTS = 2.0
# adiabatic elimination needs the axial motion slow against kappa
ADIABATIC_KAPPA_FRACTION = 0.25
MIN_MACROPARTICLES = 100


@dataclass(frozen=True)
class ProtocolConfig:
    """Timing and cloud of one release/drive/record run.

    Times are ms except ``dt`` and ``sample_every`` (us). ``dt = None``
    picks the step from the peak trap depth. A non-zero
    ``transverse_window`` (um) samples y and z only within +-window and
    scales the weights by the sampled probability.
    """

    release_time: float = 0.0
    drive_on_time: float = 3.0
    shutter_ramp: float = 0.2
    record_until: float = 30.0
    dt: Optional[float] = None
    sample_every: float = 5.0
    cloud_sigma: float = 1000.0
    temperature_uk: float = 100.0
    n_atoms: float = 1.0e6
    n_macroparticles: int = 2000
    transverse_window: float = 0.0
    seed: int = 0
    heating: bool = True
    gravity: bool = True

    def __post_init__(self):
        if self.n_macroparticles < MIN_MACROPARTICLES:
            raise InvalidParameters(
                f"n_macroparticles must be >= {MIN_MACROPARTICLES}, "
                f"got {self.n_macroparticles}"
            )
        if self.n_atoms < 0:
            raise InvalidParameters(f"n_atoms must be >= 0, got {self.n_atoms}")
        if self.cloud_sigma <= 0:
            raise InvalidParameters(
                f"cloud_sigma must be > 0, got {self.cloud_sigma}"
            )
        if self.temperature_uk < 0:
            raise InvalidParameters(
                f"temperature must be >= 0, got {self.temperature_uk}"
            )
        if self.sample_every <= 0:
            raise InvalidParameters(
                f"sample_every must be > 0, got {self.sample_every}"
            )
        if self.dt is not None and self.dt <= 0:
            raise InvalidParameters(f"dt must be > 0, got {self.dt}")
        if self.shutter_ramp < 0 or self.transverse_window < 0:
            raise InvalidParameters("shutter_ramp and window must be >= 0")
        if not self.release_time <= self.drive_on_time < self.record_until:
            raise InvalidParameters(
                "expected release_time <= drive_on_time < record_until, got "
                f"{self.release_time}, {self.drive_on_time}, {self.record_until}"
            )

    @property
    def signal_start(self):
        return self.drive_on_time + self.shutter_ramp

    def drive_fraction(self, t):
        """Amplitude fraction of the drive at time t; eta rises linearly
        over ``shutter_ramp``."""
        if t < self.drive_on_time:
            return 0.0
        if self.shutter_ramp == 0 or t >= self.signal_start:
            return 1.0
        return (t - self.drive_on_time) / self.shutter_ramp

    def sample_times(self):
        step = self.sample_every / US_PER_MS
        count = int(math.floor((self.record_until - self.release_time) / step + 1e-9))
        return self.release_time + step * np.arange(count + 1)


# --- Forces ---
def _mode_parts(positions, params):
    k = params.wavenumber
    x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
    envelope = np.exp(-(y * y + z * z) / params.waist**2)
    return np.cos(k * x), np.sin(k * x), envelope


def _acceleration(positions, photon_number, params, parts, gravity):
    cos_kx, sin_kx, envelope = parts
    u0 = light_shift_u0(params) * PER_US_TO_PER_MS
    scale = params.hbar_over_m * u0 * photon_number
    transverse = envelope * envelope
    axial_f2 = cos_kx * cos_kx * transverse
    radial = 4.0 * scale * axial_f2 / params.waist**2
    acc = np.empty_like(positions)
    acc[:, 0] = 2.0 * scale * params.wavenumber * transverse * sin_kx * cos_kx
    acc[:, 1] = radial * positions[:, 1]
    acc[:, 2] = radial * positions[:, 2] - gravity
    return acc


def dipole_force(positions, photon_number, params, gravity=True):
    """Acceleration (um/ms^2) of atoms at ``positions`` (n, 3) in the
    dipole potential of ``photon_number`` photons, plus gravity."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    parts = _mode_parts(positions, params)
    g = params.gravity if gravity else 0.0
    return _acceleration(positions, photon_number, params, parts, g)


def dipole_potential(positions, photon_number, params, gravity=True):
    """Potential energy per mass (um^2/ms^2), consistent with
    ``dipole_force``."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    cos_kx, _, envelope = _mode_parts(positions, params)
    u0 = light_shift_u0(params) * PER_US_TO_PER_MS
    potential = params.hbar_over_m * u0 * photon_number * (
        cos_kx * envelope
    ) ** 2
    if gravity:
        potential = potential + params.gravity * positions[:, 2]
    return potential


def heating_kick(velocities, local_s, dt, rng, params):
    """Random recoil kicks for one step of ``dt`` us at local saturations
    ``local_s``. Only the two axes transverse to the cavity are kicked."""
    velocities = np.asarray(velocities, dtype=float)
    local_s = np.asarray(local_s, dtype=float)
    rate = (
        2.0
        * params.hbar_over_m
        * params.omega_rec
        * params.gamma
        * PER_US_TO_PER_MS**2
        * (dt / US_PER_MS)
    )
    noise = rng.standard_normal((len(velocities), 2))
    kicked = velocities.copy()
    for column, (axis, share) in enumerate(zip((1, 2), RECOIL_AXIS_SHARES)):
        kicked[:, axis] += np.sqrt(rate * share * local_s) * noise[:, column]
    return kicked


class FieldIntegrator:
    """Velocity Verlet in the self-consistent cavity field.

    The acceleration at the current positions is cached between steps.
    Pass ``photon_number`` to freeze the field instead of solving for it.
    """

    def __init__(
        self,
        params,
        delta_c,
        dt,
        rng=None,
        heating=True,
        gravity=True,
        photon_number=None,
    ):
        self.params = params
        self.delta_c = delta_c
        self.dt = dt
        self.dt_ms = dt / US_PER_MS
        self.rng = rng if rng is not None else np.random.default_rng()
        self.heating = heating
        self.gravity = params.gravity if gravity else 0.0
        self.frozen_photon_number = photon_number
        self._u0 = light_shift_u0(params)
        self._saturation_per_photon = params.g**2 / (
            params.delta_a**2 + params.gamma**2
        )
        self._acc = None

    def field(self, state, eta):
        """N_eff, photon number and the mode factors at the current
        positions."""
        parts = _mode_parts(state.positions, self.params)
        cos_kx, _, envelope = parts
        f2 = (cos_kx * envelope) ** 2
        n_eff = float(np.sum(state.weights * f2))
        if self.frozen_photon_number is not None:
            photon_number = self.frozen_photon_number
        else:
            photon_number = lorentzian_photon_number(
                eta, self.delta_c, n_eff * self._u0, self.params.kappa
            )
        return n_eff, photon_number, parts

    def free_flight(self, state, positions, velocities, elapsed):
        """Ballistic positions after ``elapsed`` ms from the given start."""
        state.positions = positions + velocities * elapsed
        state.velocities = velocities.copy()
        state.positions[:, 2] -= 0.5 * self.gravity * elapsed * elapsed
        state.velocities[:, 2] -= self.gravity * elapsed
        self._acc = None

    def advance(self, state, eta_now, eta_next):
        """One step in place; returns N_eff and the photon number at the
        new time."""
        if self._acc is None:
            _, n_now, parts = self.field(state, eta_now)
            self._acc = _acceleration(
                state.positions, n_now, self.params, parts, self.gravity
            )
        dt = self.dt_ms
        state.velocities += 0.5 * dt * self._acc
        state.positions += dt * state.velocities
        n_eff, photon_number, parts = self.field(state, eta_next)
        if not math.isfinite(n_eff):
            bad = int(np.sum(~np.all(np.isfinite(state.positions), axis=1)))
            raise NumericalInstability(
                f"{bad} macro-particle positions became non-finite "
                f"at t = {state.time:.6f} ms"
            )
        acc = _acceleration(
            state.positions, photon_number, self.params, parts, self.gravity
        )
        state.velocities += 0.5 * dt * acc
        self._acc = acc
        if self.heating and photon_number > 0 and len(state):
            cos_kx, _, envelope = parts
            local_s = (
                self._saturation_per_photon
                * photon_number
                * (cos_kx * envelope) ** 2
            )
            state.velocities = heating_kick(
                state.velocities, local_s, self.dt, self.rng, self.params
            )
        state.time += dt
        return n_eff, photon_number


def step(state, drive, config, params, rng, dt=None):
    """Advance a copy of ``state`` by one step of ``dt`` us (default: the
    configured step) in the field of ``drive``."""
    dt = dt or config.dt or DEFAULT_MAX_DT_US
    integrator = FieldIntegrator(
        params,
        drive.delta_c,
        dt,
        rng=rng,
        heating=config.heating,
        gravity=config.gravity,
    )
    advanced = state.copy()
    eta = drive.require_eta()
    integrator.advance(advanced, eta, eta)
    return advanced


def trapped_fraction(state, params):
    """Share of the atom weight within two waists of the cavity axis."""
    total = state.atom_number
    if total == 0:
        return 0.0
    radius2 = state.positions[:, 1] ** 2 + state.positions[:, 2] ** 2
    inside = radius2 < (TRAPPED_RADIUS_WAISTS * params.waist) ** 2
    return float(np.sum(state.weights[inside]) / total)


# --- Set-up ---
def thermal_velocity_sigma(temperature_uk, params):
    """sqrt(k_B T / m) in um/ms."""
    return math.sqrt(
        temperature_to_angular(temperature_uk)
        * PER_US_TO_PER_MS
        * params.hbar_over_m
    )


def atoms_for_pulling(n_eff_u0, config, params):
    """Total atom number whose ballistically expanded cloud gives the total
    pulling ``n_eff_u0`` (rad/us) at the moment the drive turns on."""
    n_eff = n_eff_for_pulling(n_eff_u0, params)
    if n_eff < 0:
        raise InvalidParameters("pulling and U0 must have the same sign")
    elapsed = config.drive_on_time - config.release_time
    v_sigma = thermal_velocity_sigma(config.temperature_uk, params)
    spread2 = config.cloud_sigma**2 + (v_sigma * elapsed) ** 2
    w2 = params.waist**2
    axial = 0.5 * (1.0 + math.exp(-2.0 * params.wavenumber**2 * spread2))
    transverse = 1.0 / math.sqrt(1.0 + 4.0 * spread2 / w2)
    sag = 0.5 * params.gravity * elapsed**2 if config.gravity else 0.0
    overlap = (
        axial
        * transverse**2
        * math.exp(-2.0 * sag**2 / (w2 + 4.0 * spread2))
    )
    return n_eff / overlap


def initialize_thermal_cloud(config, params, rng=None):
    """Gaussian cloud of ``n_macroparticles`` equal-weight macro-particles
    with a thermal velocity distribution, at the release time."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if config.n_atoms == 0:
        return EnsembleState(
            positions=np.empty((0, 3)),
            velocities=np.empty((0, 3)),
            weights=np.empty(0),
            time=config.release_time,
        )
    n = config.n_macroparticles
    sigma = config.cloud_sigma
    positions = np.empty((n, 3))
    positions[:, 0] = rng.normal(0.0, sigma, n)
    fraction = 1.0
    if config.transverse_window > 0:
        bound = config.transverse_window / sigma
        positions[:, 1:] = stats.truncnorm.rvs(
            -bound, bound, scale=sigma, size=(n, 2), random_state=rng
        )
        fraction = (2.0 * stats.norm.cdf(bound) - 1.0) ** 2
    else:
        positions[:, 1:] = rng.normal(0.0, sigma, (n, 2))
    v_sigma = thermal_velocity_sigma(config.temperature_uk, params)
    velocities = rng.normal(0.0, 1.0, (n, 3)) * v_sigma
    weights = np.full(n, config.n_atoms * fraction / n)
    return EnsembleState(positions, velocities, weights, time=config.release_time)


def choose_time_step(config, drive, params):
    """Integration step (us) and steps per sample.

    The step resolves the axial oscillation at the deepest possible trap
    (resonant photon number eta^2 / kappa^2) with 40 steps per period and
    divides the sample interval evenly.
    """
    eta = drive.require_eta()
    depth = abs(light_shift_u0(params)) * (eta / params.kappa) ** 2
    limit = DEFAULT_MAX_DT_US
    if depth > 0:
        hbar_over_m_us = params.hbar_over_m / US_PER_MS
        omega_axial = params.wavenumber * math.sqrt(2.0 * depth * hbar_over_m_us)
        period_limit = 2.0 * math.pi / omega_axial / STEPS_PER_AXIAL_PERIOD
        if omega_axial > ADIABATIC_KAPPA_FRACTION * params.kappa:
            logger.warning(
                "axial frequency %.3g rad/us exceeds kappa/4; the adiabatic "
                "field elimination is marginal",
                omega_axial,
            )
        if config.dt is not None and config.dt > period_limit * (1 + 1e-9):
            raise InvalidParameters(
                f"dt = {config.dt} us is above the stable limit "
                f"{period_limit:.4g} us (1/40 of the axial period)"
            )
        limit = min(limit, period_limit)
    if config.dt is not None:
        limit = min(limit, config.dt)
    substeps = int(math.ceil(config.sample_every / limit - 1e-9))
    return config.sample_every / substeps, substeps


# --- Runs ---
def run_protocol(config, drive, params, rng=None, calibration=None):
    """Release, free expansion, drive ramp and recording of one trajectory
    of the whole ensemble."""
    drive = resolve_drive(drive, params, calibration)
    eta = drive.eta
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    state = initialize_thermal_cloud(config, params, rng)
    dt, substeps = choose_time_step(config, drive, params)
    integrator = FieldIntegrator(
        params,
        drive.delta_c,
        dt,
        rng=rng,
        heating=config.heating,
        gravity=config.gravity,
    )
    times = config.sample_times()
    photon_number = np.zeros(len(times))
    n_eff = np.zeros(len(times))
    fraction = np.zeros(len(times))

    # the drive is off until drive_on_time: propagate ballistically
    start_positions = state.positions.copy()
    start_velocities = state.velocities.copy()
    i = 0
    while i < len(times) and times[i] <= config.drive_on_time:
        integrator.free_flight(
            state, start_positions, start_velocities, times[i] - config.release_time
        )
        state.time = times[i]
        n_eff[i], photon_number[i], _ = integrator.field(
            state, eta * config.drive_fraction(times[i])
        )
        fraction[i] = trapped_fraction(state, params)
        i += 1

    for j in range(i, len(times)):
        for _ in range(substeps):
            t_next = state.time + integrator.dt_ms
            n_eff[j], photon_number[j] = integrator.advance(
                state,
                eta * config.drive_fraction(state.time),
                eta * config.drive_fraction(t_next),
            )
        state.time = times[j]
        fraction[j] = trapped_fraction(state, params)

    logger.debug(
        "trajectory done: %d samples, dt %.4g us, final N_eff %.4g",
        len(times), dt, n_eff[-1],
    )
    return TransmissionTrace(
        times=times,
        photon_number=photon_number,
        n_eff=n_eff,
        trapped_fraction=fraction,
        eta=eta,
        kappa=params.kappa,
        signal_start=config.signal_start,
    )


def run_ensemble(
    config,
    drive,
    params,
    n_trajectories,
    threads=1,
    calibration=None,
    progress=False,
) -> List[TransmissionTrace]:
    """Independent trajectories with seeds split from ``config.seed``.

    Results are returned in submission order, so they do not depend on
    the number of threads.
    """
    if n_trajectories < 1:
        raise InvalidParameters(
            f"n_trajectories must be >= 1, got {n_trajectories}"
        )
    seeds = np.random.SeedSequence(config.seed).spawn(n_trajectories)

    def run_one(seed):
        return run_protocol(
            config,
            drive,
            params,
            rng=np.random.default_rng(seed),
            calibration=calibration,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(run_one, seed) for seed in seeds]
        for _ in tqdm(
            as_completed(futures),
            total=len(futures),
            desc="trajectories",
            disable=not progress,
        ):
            pass
        return [future.result() for future in futures]
