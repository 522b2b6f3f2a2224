"""Search for the degree distribution with the largest load threshold.

Candidates are coefficient vectors over degrees ``2..d_max``. Before scoring,
each one is repaired into a feasible distribution with the requested average
degree, so every fitness value is the density-evolution load threshold of a
valid distribution. The search itself is scipy's differential evolution
(DE/rand/1/bin) with an explicit initial population.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .channels import ParameterError
from .de_irsa import DeParams, load_threshold
from .degree import DegreeDistribution

_FLOOR = 1e-9  # keeps every degree reachable by the tilt
_CACHE_GRID = 1e-4
_MEAN_TOL = 1e-9


@dataclass(frozen=True)
class DeConfig:
    """Differential-evolution settings: population size, mutation ``F``, crossover ``CR``."""

    population: int = 40
    F: float = 0.7
    CR: float = 0.9
    generations: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 5:
            raise ParameterError("population must be >= 5")
        if not 0.0 < self.F <= 2.0:
            raise ParameterError("F must lie in (0, 2]")
        if not 0.0 <= self.CR <= 1.0:
            raise ParameterError("CR must lie in [0, 1]")
        if self.generations < 1:
            raise ParameterError("generations must be >= 1")


def tilt_to_mean(probs: np.ndarray, degrees: np.ndarray, target: float) -> np.ndarray:
    """Exponentially tilt ``probs`` so that its mean over ``degrees`` equals ``target``.

    Returns ``probs_i exp(theta d_i) / Z`` with ``theta`` found by root
    bracketing; the mean is increasing in ``theta``.
    """
    logp = np.log(probs)

    def mean_gap(theta: float) -> float:
        w = logp + theta * degrees
        return float(np.exp(w - logsumexp(w)) @ degrees) - target

    lo, hi = -1.0, 1.0
    while mean_gap(lo) > 0:
        lo *= 2.0
    while mean_gap(hi) < 0:
        hi *= 2.0
    theta = optimize.brentq(mean_gap, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    w = logp + theta * degrees
    return np.exp(w - logsumexp(w))


def repair(vector: np.ndarray, d_max: int, avg_degree: float) -> np.ndarray:
    """Map an arbitrary vector to a distribution on ``2..d_max`` with the given mean.

    Clip to non-negative values, normalise, then tilt onto the mean. Each
    entry carries a tiny floor so the tilt can always reach the target.
    """
    degrees = np.arange(2, d_max + 1, dtype=float)
    p = np.clip(np.asarray(vector, dtype=float), 0.0, None) + _FLOOR
    p /= p.sum()
    return tilt_to_mean(p, degrees, avg_degree)


def _check(d_max: int, avg_degree: float) -> None:
    if d_max < 2:
        raise ParameterError("d_max must be >= 2")
    if avg_degree > d_max:
        raise ParameterError(f"average degree {avg_degree} exceeds d_max={d_max}")
    if avg_degree < 2:
        raise ParameterError("average degree must be >= 2")


def optimize_degree_distribution(d_max: int, avg_degree: float, params: DeParams | None = None,
                                 de_config: DeConfig | None = None,
                                 workers: int | Callable = 1) -> tuple[DegreeDistribution, float]:
    """Degree distribution on ``2..d_max`` with mean ``avg_degree`` maximising the load threshold.

    Returns the best distribution found and its threshold. Threshold
    evaluations are cached on a 1e-4 grid of the repaired coefficients.
    ``workers`` is passed to scipy; with population-synchronous updates the
    result does not depend on it.
    """
    _check(d_max, avg_degree)
    params = params or DeParams()
    cfg = de_config or DeConfig()
    if d_max == 2 or abs(avg_degree - 2.0) < _MEAN_TOL:
        dist = DegreeDistribution.regular(2)
        return dist, load_threshold(dist, params)
    if abs(avg_degree - d_max) < _MEAN_TOL:
        dist = DegreeDistribution.regular(d_max)
        return dist, load_threshold(dist, params)

    dims = d_max - 1
    cache: dict[tuple[int, ...], float] = {}

    def neg_fitness(x: np.ndarray) -> float:
        p = repair(x, d_max, avg_degree)
        key = tuple(np.rint(p / _CACHE_GRID).astype(np.int64).tolist())
        if key not in cache:
            cache[key] = load_threshold(DegreeDistribution.from_vector(p, d_min=2), params)
        return -cache[key]

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    init = rng.random((cfg.population, dims))
    res = optimize.differential_evolution(
        neg_fitness, bounds=[(0.0, 1.0)] * dims, strategy="rand1bin", maxiter=cfg.generations,
        mutation=cfg.F, recombination=cfg.CR, init=init, seed=cfg.seed, polish=False, tol=0.0,
        atol=0.0, updating="deferred", workers=workers)
    best = repair(res.x, d_max, avg_degree)
    dist = DegreeDistribution.from_vector(best, d_min=2)
    return dist, load_threshold(dist, params)
