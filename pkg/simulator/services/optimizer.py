"""Bounded derivative-free minimization with deterministic restarts."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from cavity.exceptions import InvalidParameters, NonFiniteObjective

logger = logging.getLogger(__name__)

N_STARTS = 8
X_TOLERANCE = 1e-8
F_TOLERANCE = 1e-12
MAX_EVALUATIONS = 10_000
BOUND_TOLERANCE = 1e-6
LHS_SEED = 0


@dataclass
class FitResult:
    parameters: Dict[str, float]
    residual_rms: float
    n_evaluations: int
    converged: bool
    parameter_bounds_hit: List[str] = field(default_factory=list)
    objective: float = 0.0
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.residual_rms < 0:
            raise InvalidParameters("residual_rms must be >= 0")

    def vector(self, names=None):
        names = names or list(self.parameters)
        return np.array([self.parameters[name] for name in names])

    def as_dict(self):
        return {
            "parameters": dict(self.parameters),
            "residual_rms": self.residual_rms,
            "n_evaluations": self.n_evaluations,
            "converged": self.converged,
            "parameter_bounds_hit": list(self.parameter_bounds_hit),
            "objective": self.objective,
            "diagnostics": dict(self.diagnostics),
        }


class _CountingObjective:
    """Counts evaluations and refuses non-finite values."""

    def __init__(self, objective):
        self.objective = objective
        self.evaluations = 0

    def __call__(self, x):
        self.evaluations += 1
        value = float(self.objective(x))
        if not math.isfinite(value):
            raise NonFiniteObjective(
                f"objective is {value} at {np.array2string(np.asarray(x))}"
            )
        return value


def _start_points(initial, bounds, box, n_starts, seed):
    initial = np.asarray(initial, dtype=float)
    if n_starts <= 1:
        return [initial]
    lower, upper = [], []
    for i, x in enumerate(initial):
        lo, hi = box[i] if box else (None, None)
        if lo is None or hi is None:
            span = max(abs(x), 1.0)
            b_lo, b_hi = bounds[i] if bounds else (None, None)
            lo = x - span if lo is None else lo
            hi = x + span if hi is None else hi
            if b_lo is not None:
                lo = max(lo, b_lo)
            if b_hi is not None:
                hi = min(hi, b_hi)
        lower.append(lo)
        upper.append(hi)
    sampler = qmc.LatinHypercube(d=len(initial), seed=seed)
    sample = qmc.scale(sampler.random(n_starts - 1), lower, upper)
    return [initial] + list(sample)


def _hit_bounds(x, bounds, names):
    hit = []
    if not bounds:
        return hit
    for name, value, (lo, hi) in zip(names, x, bounds):
        for bound in (lo, hi):
            if bound is not None and abs(value - bound) <= BOUND_TOLERANCE * max(
                1.0, abs(bound)
            ):
                hit.append(name)
                break
    return hit


def minimize(
    objective,
    initial: Sequence[float],
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None,
    names: Optional[Sequence[str]] = None,
    n_starts: int = N_STARTS,
    start_box=None,
    xatol: float = X_TOLERANCE,
    fatol: float = F_TOLERANCE,
    max_evaluations: int = MAX_EVALUATIONS,
    seed: int = LHS_SEED,
    threads: int = 1,
) -> FitResult:
    """Nelder-Mead from ``initial`` plus ``n_starts - 1`` Latin-hypercube
    starts; the lowest objective wins, ties going to the earliest start.

    ``start_box`` limits where the extra starts are drawn; by default the
    finite bounds, or +-max(|x0|, 1) around the initial point.
    """
    initial = np.asarray(initial, dtype=float)
    names = list(names) if names else [f"x{i}" for i in range(len(initial))]
    if bounds is not None and len(bounds) != len(initial):
        raise InvalidParameters("bounds and initial point differ in length")
    if bounds is not None:
        initial = np.array(
            [
                np.clip(x, -np.inf if lo is None else lo, np.inf if hi is None else hi)
                for x, (lo, hi) in zip(initial, bounds)
            ]
        )
    first_value = float(objective(initial))
    if not math.isfinite(first_value):
        raise NonFiniteObjective(
            f"objective is {first_value} at the initial point {initial}"
        )
    starts = _start_points(initial, bounds, start_box, n_starts, seed)

    def run_start(index_point):
        index, point = index_point
        counted = _CountingObjective(objective)
        try:
            result = optimize.minimize(
                counted,
                point,
                method="Nelder-Mead",
                bounds=bounds,
                options={
                    "xatol": xatol,
                    "fatol": fatol,
                    "maxfev": max_evaluations,
                    "maxiter": max_evaluations,
                },
            )
        except NonFiniteObjective:
            if index == 0:
                raise
            logger.warning("start %d hit a non-finite objective; skipped", index)
            return index, None, counted.evaluations
        return index, result, counted.evaluations

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(run_start, enumerate(starts)))

    finished = [(i, r) for i, r, _ in outcomes if r is not None]
    evaluations = 1 + sum(n for _, _, n in outcomes)
    best_index, best = min(finished, key=lambda item: (item[1].fun, item[0]))
    x = np.asarray(best.x, dtype=float)
    logger.debug(
        "best of %d starts: #%d, objective %.6g after %d evaluations",
        len(starts), best_index, best.fun, evaluations,
    )
    return FitResult(
        parameters=dict(zip(names, (float(v) for v in x))),
        residual_rms=math.sqrt(max(float(best.fun), 0.0)),
        n_evaluations=evaluations,
        converged=bool(best.success),
        parameter_bounds_hit=_hit_bounds(x, bounds, names),
        objective=float(best.fun),
        diagnostics={
            "best_start": best_index,
            "n_starts": len(starts),
            "message": str(best.message),
        },
    )
