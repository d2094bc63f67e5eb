"""Transmission traces and the trapping-time read-out."""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from cavity.exceptions import NO_DECAY, InvalidParameters
from cavity.services.core_model import normalized_transmission

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.1
TRACE_COLUMNS = (
    "t_ms",
    "photon_number",
    "transmission_norm",
    "n_eff",
    "trapped_fraction",
)


@dataclass
class TransmissionTrace:
    """Sampled cavity output.

    times: ms; photon_number: intracavity <a^dag a>; n_eff: effective atom
    number; trapped_fraction: share of the atom weight within 2 waists of
    the axis. ``eta`` and ``kappa`` (rad/us) normalize the transmission;
    ``signal_start`` (ms) is where the drive is fully on.
    """

    times: np.ndarray
    photon_number: np.ndarray
    n_eff: np.ndarray
    trapped_fraction: np.ndarray
    eta: float = 0.0
    kappa: float = 1.0
    signal_start: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.photon_number = np.asarray(self.photon_number, dtype=float)
        self.n_eff = np.asarray(self.n_eff, dtype=float)
        self.trapped_fraction = np.asarray(self.trapped_fraction, dtype=float)
        n = len(self.times)
        if not (
            len(self.photon_number) == len(self.n_eff)
            == len(self.trapped_fraction) == n
        ):
            raise InvalidParameters("trace arrays must have equal length")
        if np.any(self.photon_number < 0):
            raise InvalidParameters("photon number must be >= 0")

    def __len__(self):
        return len(self.times)

    @property
    def transmission_norm(self):
        return normalized_transmission(self.photon_number, self.eta, self.kappa)

    def columns(self):
        """Columns in the CSV layout of the ``simulate`` subcommand."""
        return {
            "t_ms": self.times,
            "photon_number": self.photon_number,
            "transmission_norm": self.transmission_norm,
            "n_eff": self.n_eff,
            "trapped_fraction": self.trapped_fraction,
        }


def average_traces(traces: List[TransmissionTrace]) -> TransmissionTrace:
    """Pointwise mean of traces sampled on the same time grid."""
    if not traces:
        raise InvalidParameters("no traces to average")
    first = traces[0]
    for trace in traces[1:]:
        if len(trace) != len(first) or not np.array_equal(
            trace.times, first.times
        ):
            raise InvalidParameters("traces have mismatched time grids")
    return TransmissionTrace(
        times=first.times.copy(),
        photon_number=np.mean([t.photon_number for t in traces], axis=0),
        n_eff=np.mean([t.n_eff for t in traces], axis=0),
        trapped_fraction=np.mean([t.trapped_fraction for t in traces], axis=0),
        eta=first.eta,
        kappa=first.kappa,
        signal_start=first.signal_start,
    )


def pointwise_standard_error(traces: List[TransmissionTrace]) -> np.ndarray:
    """Standard error of the averaged photon number at each sample."""
    if len(traces) < 2:
        return np.zeros(len(traces[0]) if traces else 0)
    stack = np.array([t.photon_number for t in traces])
    return stack.std(axis=0, ddof=1) / np.sqrt(len(traces))


def extract_trapping_time(trace: TransmissionTrace, tail_fraction=TAIL_FRACTION):
    """Time from the transmission maximum to the first crossing of the
    midpoint between the maximum and the empty-cavity level, in ms.

    The maximum is searched from ``signal_start`` on; the empty-cavity
    level is the median of the last ``tail_fraction`` of the record. The
    crossing is linearly interpolated. Returns ``NO_DECAY`` when the trace
    never comes back down to the midpoint.
    """
    times, signal = trace.times, trace.photon_number
    window = np.nonzero(times >= trace.signal_start)[0]
    if window.size < 2:
        return NO_DECAY
    i_max = int(window[0] + np.argmax(signal[window]))
    n_tail = max(1, int(round(tail_fraction * len(signal))))
    p_max = signal[i_max]
    p_min = float(np.median(signal[-n_tail:]))
    if p_max <= p_min:
        return NO_DECAY
    midpoint = 0.5 * (p_max + p_min)
    below = np.nonzero(signal[i_max:] <= midpoint)[0]
    if below.size == 0:
        return NO_DECAY
    j = i_max + int(below[0])
    t0, t1 = times[j - 1], times[j]
    p0, p1 = signal[j - 1], signal[j]
    t_mid = t0 + (midpoint - p0) * (t1 - t0) / (p1 - p0)
    logger.debug(
        "maximum %.6g at %.4f ms, midpoint crossed at %.4f ms",
        p_max, times[i_max], t_mid,
    )
    return float(t_mid - times[i_max])
