"""Density evolution for IRSA over Rayleigh block fading with capture.

The asymptotic analysis tracks two erasure probabilities on the frame's
bipartite graph: ``q`` (burst node to slot node) and ``p`` (slot node to burst
node). With edge-perspective degree coefficients ``lambda_d``::

    q = f_b(p) = sum_d lambda_d p^(d-1)
    p = f_s(q) = 1 - sum_t x^(t-1) / z_t^((t-1)/2) * exp(-(z_t - 1)(1/B + x/z_t))

where ``x = (G/R) q``, ``R = 1/mean_degree`` and ``z_t = (1 + b*)^t``. The
packet loss rate at the fixed point is ``sum_d Lambda_d p^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import gammaln

from .channels import ParameterError
from .degree import DegreeDistribution


class ConvergenceError(ArithmeticError):
    """Raised when a numerical series or iteration fails to converge."""


@dataclass(frozen=True)
class DeParams:
    """Numerical and channel parameters of the density-evolution engine.

    ``mean_snr`` and ``threshold`` are linear. The defaults truncate the slot
    series when a term drops below 1e-14 (or beyond 200 terms) and stop the
    fixed-point iteration at a step below 1e-10 or after 10^4 iterations.
    """

    mean_snr: float = 100.0
    threshold: float = 10 ** 0.3
    target_plr: float = 1e-2
    series_cap: int = 200
    term_tol: float = 1e-14
    fixpoint_tol: float = 1e-10
    max_de_iters: int = 10_000
    bracket: tuple[float, float] = (0.0, 5.0)
    load_tol: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 < self.target_plr < 1.0:
            raise ParameterError("target_plr must lie in (0, 1)")
        if self.term_tol <= 0:
            raise ParameterError("term_tol must be positive")
        if self.mean_snr <= 0:
            raise ParameterError("mean_snr must be positive")
        if self.threshold < 1:
            raise ParameterError("capture threshold must be >= 1")


def capture_step_prob(r: int, t: int, mean_snr: float, threshold: float) -> float:
    """Probability that the reference burst is decoded at intra-slot step ``t``.

    ``r`` replicas collide in the slot; the reference is the ``t``-th strongest
    and is captured after the ``t - 1`` stronger ones have been removed.
    """
    if not 1 <= t <= r:
        raise ParameterError(f"need 1 <= t <= r, got r={r}, t={t}")
    if mean_snr <= 0:
        raise ParameterError("mean_snr must be positive")
    log1pb = math.log1p(threshold)
    log_perm = gammaln(r) - gammaln(r - t + 1)
    z_t = math.expm1(t * log1pb)  # z_t - 1, accurate for small b*
    log_val = log_perm - z_t / mean_snr - t * (r - (t + 1) / 2.0) * log1pb
    return float(math.exp(log_val))


def capture_prob(r: int, mean_snr: float, threshold: float) -> float:
    """``D(r)``: probability that a given burst in a slot of degree ``r`` is decoded
    by intra-slot interference cancellation."""
    if r < 1:
        raise ParameterError("slot degree must be >= 1")
    return float(sum(capture_step_prob(r, t, mean_snr, threshold) for t in range(1, r + 1)))


@numba.njit(cache=True)
def _slot_update(x, inv_b, log1pb, t_max, term_tol):
    """Return ``(f_s, ok)`` for ``x = (G/R) q``; ``ok`` is False if truncated."""
    total = 0.0
    prev = np.inf
    log_x = np.log(x) if x > 0.0 else -np.inf
    for t in range(1, t_max + 1):
        log_z = t * log1pb
        z_minus_1 = np.expm1(log_z)
        if t == 1:
            lead = 0.0
        else:
            lead = (t - 1) * log_x - 0.5 * (t - 1) * log_z
        if np.isinf(z_minus_1):
            term = 0.0
        else:
            inv_z = np.exp(-log_z)
            expo = z_minus_1 * inv_b + x * (1.0 - inv_z)
            term = np.exp(lead - expo)
        total += term
        if t > 1 and term < term_tol and term <= prev:
            return 1.0 - total, True
        prev = term
    return 1.0 - total, False


@numba.njit(cache=True)
def _fading_fixpoint(lam_edge, lam_node, load, mean_deg, inv_b, log1pb, t_max, term_tol, tol, max_iter):
    scale = load * mean_deg
    # All burst-to-slot messages start erased (q_0 = 1), so the iteration
    # descends onto the largest fixed point of the recursion.
    p = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        q = 0.0
        for d in range(1, lam_edge.shape[0]):
            if lam_edge[d] > 0.0:
                q += lam_edge[d] * p ** (d - 1)
        p_new, ok = _slot_update(scale * q, inv_b, log1pb, t_max, term_tol)
        if not ok:
            return p_new, 1, it
        if abs(p_new - p) < tol:
            return p_new, 0, it
        p = p_new
    return p, 2, it


@numba.njit(cache=True)
def _collision_fixpoint(lam_edge, load, mean_deg, tol, max_iter):
    scale = load * mean_deg
    p = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        q = 0.0
        for d in range(1, lam_edge.shape[0]):
            if lam_edge[d] > 0.0:
                q += lam_edge[d] * p ** (d - 1)
        p_new = 1.0 - np.exp(-scale * q)
        if abs(p_new - p) < tol:
            return p_new, it
        p = p_new
    return p, it


def _edge_vector(dist: DegreeDistribution) -> tuple[np.ndarray, np.ndarray]:
    node = dist.dense()
    edge = node * np.arange(node.size) / dist.mean
    return edge, node


def _plr(node: np.ndarray, p: float) -> float:
    degrees = np.arange(node.size)
    return float(np.sum(node * p ** degrees))


def slot_update(q: float, load: float, dist: DegreeDistribution, params: DeParams) -> float:
    """The slot-node map ``f_s(q)`` at load ``load`` (exposed for analysis)."""
    val, ok = _slot_update(load * dist.mean * q, 1.0 / params.mean_snr,
                           math.log1p(params.threshold), params.series_cap, params.term_tol)
    if not ok:
        raise ConvergenceError(f"slot series did not converge within {params.series_cap} terms")
    return float(val)


def burst_update(p: float, dist: DegreeDistribution) -> float:
    """The burst-node map ``f_b(p) = sum_d lambda_d p^(d-1)``."""
    return float(sum(w * p ** (d - 1) for d, w in dist.edge_perspective().items()))


def de_fixed_point(dist: DegreeDistribution, load: float, params: DeParams) -> tuple[float, float]:
    """Iterate the density evolution to its limit.

    The recursion starts from the all-erased state and runs ``p <- f_s(f_b(p))``
    until the step falls below ``params.fixpoint_tol``. Returns ``(p_inf, plr)``
    where ``plr = sum_d Lambda_d p_inf^d``.
    """
    if load < 0:
        raise ParameterError("load must be >= 0")
    edge, node = _edge_vector(dist)
    p, status, iters = _fading_fixpoint(
        edge, node, float(load), dist.mean, 1.0 / params.mean_snr, math.log1p(params.threshold),
        params.series_cap, params.term_tol, params.fixpoint_tol, params.max_de_iters,
    )
    if status == 1:
        raise ConvergenceError(
            f"slot series did not fall below {params.term_tol:g} within {params.series_cap} terms "
            f"(load={load}, iteration={iters})"
        )
    return float(p), _plr(node, p)


def collision_de_fixed_point(dist: DegreeDistribution, load: float,
                             tol: float = 1e-10, max_iters: int = 10_000) -> tuple[float, float]:
    """Density evolution on the collision channel, ``f_s(q) = 1 - exp(-(G/R) q)``.

    Starts from the all-erased state ``p = 1``.
    """
    if load < 0:
        raise ParameterError("load must be >= 0")
    edge, node = _edge_vector(dist)
    p, _ = _collision_fixpoint(edge, float(load), dist.mean, tol, max_iters)
    return float(p), _plr(node, p)


def _bisect(plr_at, target: float, lo: float, hi: float, tol: float) -> float:
    if plr_at(lo) >= target:
        raise ParameterError("infeasible at zero load: PLR(0) already exceeds the target")
    if plr_at(hi) < target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if plr_at(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def load_threshold(dist: DegreeDistribution, params: DeParams) -> float:
    """Largest load (to ``params.load_tol``) whose asymptotic PLR is below target."""
    lo, hi = params.bracket
    return _bisect(lambda g: de_fixed_point(dist, g, params)[1], params.target_plr, lo, hi, params.load_tol)


def collision_load_threshold(dist: DegreeDistribution, target_plr: float = 1e-2,
                             bracket: tuple[float, float] = (0.0, 5.0), tol: float = 1e-3) -> float:
    """Load threshold of the collision-channel recursion."""
    return _bisect(lambda g: collision_de_fixed_point(dist, g)[1], target_plr, bracket[0], bracket[1], tol)
