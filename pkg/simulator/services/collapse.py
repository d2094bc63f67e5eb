"""Stochastic atom-number decay of a self-trapped cloud.

The whole ensemble loses atoms at the total rate

    R(n) = (n / tau) exp(-A / ((D - n u)^2 + 1)),

with D = Delta_C / kappa and u = U0 / kappa per atom. The exponent is the
Boltzmann factor of the collective trap depth: fewer atoms pull the cavity
less, the trap gets shallower and every remaining atom escapes faster.
Temperature is folded into A and held fixed.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from cavity.exceptions import InvalidParameters
from cavity.services.core_model import lorentzian_photon_number
from cavity.units import mhz

from .traces import TransmissionTrace

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 501
# log-fraction grid of the mean-field quadrature
QUADRATURE_POINTS = 4001
QUADRATURE_FLOOR = 1.0e-12


@dataclass(frozen=True)
class DecayModelParams:
    """Parameters of the escape-rate law; tilde quantities in units of
    kappa, tau in ms."""

    delta_c_tilde: float
    u0_tilde: float
    n0: int
    a_param: float
    tau: float
    kappa: float = mhz(2.77)

    def __post_init__(self):
        if self.n0 < 0 or int(self.n0) != self.n0:
            raise InvalidParameters(f"n0 must be an integer >= 0, got {self.n0}")
        if self.tau <= 0:
            raise InvalidParameters(f"tau must be > 0, got {self.tau}")
        if self.a_param < 0:
            raise InvalidParameters(f"A must be >= 0, got {self.a_param}")
        if self.kappa <= 0:
            raise InvalidParameters(f"kappa must be > 0, got {self.kappa}")

    @classmethod
    def from_physical(cls, delta_c, n0_u0, n0, a_param, tau, kappa=mhz(2.77)):
        """Build from Delta_C and the initial total pulling N(0) U0, both in
        rad/us."""
        u0_tilde = n0_u0 / (kappa * n0) if n0 else 0.0
        return cls(
            delta_c_tilde=delta_c / kappa,
            u0_tilde=u0_tilde,
            n0=int(n0),
            a_param=a_param,
            tau=tau,
            kappa=kappa,
        )

    @property
    def n0_u0_tilde(self):
        return self.n0 * self.u0_tilde


def _suppression(delta_c_tilde, pulling_tilde, a_param):
    return np.exp(-a_param / ((delta_c_tilde - pulling_tilde) ** 2 + 1.0))


def escape_rate(n, model):
    """Total escape rate (1/ms) of an ensemble of n atoms."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise InvalidParameters("atom number must be >= 0")
    rate = (n / model.tau) * _suppression(
        model.delta_c_tilde, n * model.u0_tilde, model.a_param
    )
    return float(rate) if rate.ndim == 0 else rate


def per_atom_rate(n, model):
    """Escape rate per remaining atom, 1/ms."""
    n = np.asarray(n, dtype=float)
    rate = _suppression(model.delta_c_tilde, n * model.u0_tilde, model.a_param)
    return rate / model.tau


@dataclass
class DecayTrajectory:
    """Escape times (ms) and the atom count left after each escape."""

    n0: int
    escape_times: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.escape_times)

    def counts_at(self, times):
        """Step function n(t) evaluated at ``times``."""
        escaped = np.searchsorted(self.escape_times, times, side="right")
        return self.n0 - escaped


def simulate_decay(model, t_end, seed=None, rng=None):
    """Exact-event sampling of the escape process up to ``t_end`` ms.

    Waiting times are exponential with the instantaneous total rate. The
    rates only depend on the count, so the whole sequence is drawn at once.
    """
    if t_end < 0:
        raise InvalidParameters(f"t_end must be >= 0, got {t_end}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    n0 = model.n0
    if n0 == 0:
        return DecayTrajectory(0, np.empty(0), np.empty(0, dtype=int))
    counts = np.arange(n0, 0, -1)
    rates = escape_rate(counts, model)
    with np.errstate(divide="ignore"):
        waits = rng.standard_exponential(n0) / rates
    times = np.cumsum(waits)
    kept = int(np.searchsorted(times, t_end, side="right"))
    return DecayTrajectory(n0, times[:kept], counts[:kept] - 1)


def mean_field_fraction(times, delta_c_tilde, n0_u0_tilde, a_param, tau):
    """Deterministic n(t) / n0 of dn/dt = -R(n).

    In y = n / n0 the equation separates; t(y) is tabulated by quadrature
    on a log-y grid and inverted by interpolation.
    """
    times = np.asarray(times, dtype=float)
    log_y = np.linspace(0.0, math.log(QUADRATURE_FLOOR), QUADRATURE_POINTS)
    inverse_rate = 1.0 / _suppression(
        delta_c_tilde, np.exp(log_y) * n0_u0_tilde, a_param
    )
    elapsed = tau * integrate.cumulative_trapezoid(
        inverse_rate, -log_y, initial=0.0
    )
    return np.exp(np.interp(times, elapsed, log_y, right=-np.inf))


def mean_field_ode(times, model, rtol=1e-10):
    """The same curve by direct ODE integration of n(t)."""
    if model.n0 == 0:
        return np.zeros(len(times))
    solution = integrate.solve_ivp(
        lambda t, n: -escape_rate(np.maximum(n, 0.0), model),
        (0.0, float(np.max(times))),
        [float(model.n0)],
        method="DOP853",
        t_eval=times,
        rtol=rtol,
        atol=rtol * model.n0,
    )
    return solution.y[0]


@dataclass
class DecayCurve:
    times: np.ndarray
    n_mean: np.ndarray
    n_meanfield: np.ndarray
    n_trajectories: int


def mean_decay_curve(
    model,
    t_end,
    n_trajectories,
    master_seed=0,
    n_points=DEFAULT_GRID_POINTS,
    threads=1,
):
    """Trajectory-averaged n(t) on a uniform grid, with the mean-field
    curve for comparison."""
    if n_trajectories < 1:
        raise InvalidParameters(
            f"n_trajectories must be >= 1, got {n_trajectories}"
        )
    times = np.linspace(0.0, t_end, n_points)
    seeds = np.random.SeedSequence(master_seed).spawn(n_trajectories)

    def run_one(seed):
        trajectory = simulate_decay(model, t_end, rng=np.random.default_rng(seed))
        return trajectory.counts_at(times)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        counts = list(pool.map(run_one, seeds))
    n_mean = np.mean(counts, axis=0)
    n_meanfield = model.n0 * mean_field_fraction(
        times, model.delta_c_tilde, model.n0_u0_tilde, model.a_param, model.tau
    )
    logger.debug(
        "%d decay trajectories, final mean %.4g atoms", n_trajectories, n_mean[-1]
    )
    return DecayCurve(times, n_mean, n_meanfield, n_trajectories)


def transmission_from_n(times, n_series, model, eta):
    """Cavity photon number for an atom-number series, with
    N_eff U0 = n u kappa."""
    n_series = np.asarray(n_series, dtype=float)
    kappa = model.kappa
    photon_number = lorentzian_photon_number(
        eta, model.delta_c_tilde * kappa, n_series * model.u0_tilde * kappa, kappa
    )
    fraction = n_series / model.n0 if model.n0 else np.zeros_like(n_series)
    return TransmissionTrace(
        times=times,
        photon_number=photon_number,
        n_eff=n_series,
        trapped_fraction=fraction,
        eta=eta,
        kappa=kappa,
        signal_start=float(times[0]) if len(times) else 0.0,
    )
