"""Closed-form calculators.

Covers classic ALOHA / slotted ALOHA throughput, layer-3 throughput and loss
when a layer-3 packet has to be fragmented over several layer-2 packets, and
the low-load packet-loss approximation of asynchronous replica schemes built
on the notion of a vulnerable period.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .channels import ParameterError


class Protocol(str, enum.Enum):
    ALOHA = "ALOHA"
    SA = "SA"


def classic_throughput(protocol: Protocol | str, load: float) -> float:
    """Throughput of pure ALOHA (``G e^{-2G}``) or slotted ALOHA (``G e^{-G}``)."""
    if load < 0:
        raise ParameterError("load must be >= 0")
    protocol = Protocol(protocol)
    if protocol is Protocol.ALOHA:
        return load * math.exp(-2.0 * load)
    return load * math.exp(-load)


def spectral_efficiency(throughput: float, rate: float) -> float:
    """``xi = S * R`` in b/s/Hz."""
    return throughput * rate


def max_spectral_efficiency(throughput_at_rate: Callable[[float], float], rate_max: float,
                            step: float = 0.01) -> tuple[float, float]:
    """Grid search of ``S(R) * R`` over ``R in (0, rate_max]``.

    Returns ``(xi_star, R_star)``. No closed form exists for the schemes of
    interest, so the maximisation is numerical on a grid of spacing ``step``.
    """
    rates = np.arange(step, rate_max + 0.5 * step, step)
    values = [throughput_at_rate(float(r)) * float(r) for r in rates]
    k = int(np.argmax(values))
    return float(values[k]), float(rates[k])


def normalized_capacity(xi_star: float, aggregate_power: float, noise_power: float) -> float:
    """``eta = xi* / log2(1 + P_g / N)``: efficiency relative to the Gaussian MAC sum rate."""
    return xi_star / math.log2(1.0 + aggregate_power / noise_power)


# --------------------------------------------------------------------------
# Layer-3 metrics


class LawKind(str, enum.Enum):
    DISCRETE = "discrete"
    EXPONENTIAL = "exponential"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PacketLengthLaw:
    """Distribution of the layer-3 packet length, in layer-2 packet durations.

    Use the constructors :meth:`discrete`, :meth:`exponential` and
    :meth:`custom` rather than filling the fields by hand.
    """

    kind: LawKind
    atoms: tuple[tuple[float, float], ...] = ()
    mean: float = 1.0
    density: Callable[[float], float] | None = None

    @classmethod
    def discrete(cls, atoms: Sequence[tuple[float, float]]) -> "PacketLengthLaw":
        atoms = tuple((float(x), float(p)) for x, p in atoms)
        if any(x <= 0 for x, _ in atoms) or any(p < 0 for _, p in atoms):
            raise ParameterError("atoms need positive lengths and non-negative probabilities")
        total = sum(p for _, p in atoms)
        if abs(total - 1.0) > 1e-9:
            raise ParameterError(f"atom probabilities sum to {total}, expected 1")
        return cls(LawKind.DISCRETE, atoms=atoms, mean=sum(x * p for x, p in atoms))

    @classmethod
    def exponential(cls, mean: float) -> "PacketLengthLaw":
        if mean <= 0:
            raise ParameterError("mean must be positive")
        return cls(LawKind.EXPONENTIAL, mean=float(mean))

    @classmethod
    def custom(cls, density: Callable[[float], float], mean: float) -> "PacketLengthLaw":
        if mean <= 0:
            raise ParameterError("mean must be positive")
        return cls(LawKind.CUSTOM, mean=float(mean), density=density)


def fragment_pmf(law: PacketLengthLaw, i_max: int) -> np.ndarray:
    """Probability ``p_i`` that a layer-3 packet needs exactly ``i`` fragments.

    ``p_i`` is the mass of the length law on ``(i-1, i]``, so a discrete atom
    at an integer length ``k`` lands in bin ``k``. Index 0 of the returned
    array is unused (always 0). Mass beyond ``i_max`` is folded into the last
    bin and a warning is emitted when it exceeds 1e-6.
    """
    if i_max < 1:
        raise ParameterError("i_max must be >= 1")
    p = np.zeros(i_max + 1)
    if law.kind is LawKind.DISCRETE:
        for x, w in law.atoms:
            p[min(max(int(math.ceil(x - 1e-12)), 1), i_max)] += w
        tail = sum(w for x, w in law.atoms if math.ceil(x - 1e-12) > i_max)
    elif law.kind is LawKind.EXPONENTIAL:
        i = np.arange(1, i_max + 1)
        p[1:] = np.exp(-(i - 1) / law.mean) - np.exp(-i / law.mean)
        tail = math.exp(-i_max / law.mean)
        p[i_max] += tail
    else:
        for i in range(1, i_max + 1):
            p[i], _ = integrate.quad(law.density, i - 1, i, epsabs=1e-10, limit=200)
        tail = max(0.0, 1.0 - float(p.sum()))
        p[i_max] += tail
    if tail > 1e-6:
        warnings.warn(f"fragment pmf: tail mass {tail:.3g} beyond i_max={i_max} folded into the last bin",
                      RuntimeWarning, stacklevel=2)
    return p


def discretized_mean(p: np.ndarray) -> float:
    """Mean number of fragments ``sum_i i p_i`` (the ceiling of the length)."""
    return float(np.dot(np.arange(p.size), p))


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


def l3_metrics(load: float, p_s: float, p_i: np.ndarray, overhead_frag: float = 0.0,
               overhead_pad: float = 0.0, synchronous: bool = True) -> tuple[float, float]:
    """Layer-3 throughput and loss rate.

    In slot-synchronous schemes a layer-3 packet of ``i`` fragments survives
    only if all fragments do, so ``p_s3 = sum_i p_i p_s^i`` and
    ``S3 = G p_s3 (1 - O_f)(1 - O_p)``. Asynchronous schemes send the whole
    packet at once: ``S3 = G p_s``.
    """
    _check_fraction("p_s", p_s)
    _check_fraction("overhead_frag", overhead_frag)
    _check_fraction("overhead_pad", overhead_pad)
    if not synchronous:
        return load * p_s, 1.0 - p_s
    p_i = np.asarray(p_i, dtype=float)
    p_s3 = float(np.dot(p_i, p_s ** np.arange(p_i.size)))
    return load * p_s3 * (1.0 - overhead_frag) * (1.0 - overhead_pad), 1.0 - p_s3


def l3_bound(load: float, p_s: float, mean_discretized: float, overhead_frag: float = 0.0,
             overhead_pad: float = 0.0) -> tuple[float, float]:
    """Jensen bound using only the mean number of fragments.

    ``p_s^i`` is convex in ``i``, so ``p_s^{E[i]}`` never exceeds the exact
    ``E[p_s^i]``: the throughput returned is a lower bound and the loss rate an
    upper bound.
    """
    _check_fraction("p_s", p_s)
    if mean_discretized < 1:
        raise ParameterError("mean number of fragments must be >= 1")
    p_tilde = p_s ** mean_discretized
    return load * p_tilde * (1.0 - overhead_frag) * (1.0 - overhead_pad), 1.0 - p_tilde


# --------------------------------------------------------------------------
# Low-load PLR approximation for asynchronous replica schemes


class VulnerableMode(str, enum.Enum):
    CODED = "coded"
    MRC = "mrc"


@dataclass(frozen=True)
class VulnerableSpec:
    """Inputs of the vulnerable-period computation (powers linear)."""

    rate: float
    signal_power: float
    noise_power: float
    alpha: float = 0.0
    degree: int = 2
    frame_packets: int = 200

    def __post_init__(self) -> None:
        if self.signal_power <= 0 or self.noise_power <= 0:
            raise ParameterError("powers must be positive")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if self.frame_packets < self.degree:
            raise ParameterError("frame_packets must be >= degree")


def vulnerable_fraction(mode: VulnerableMode | str, spec: VulnerableSpec) -> float:
    """Minimum interference-free fraction of a packet that still allows decoding.

    ``coded``: one replica partly overlapped by a single equal-power interferer,
    ``phi_a = (R - r_i) / (r_f - r_i)``.
    ``mrc``: MRC of two replicas, with ``alpha`` the ratio between the
    one-replica-interfered portion and the clean portion,
    ``phi_m = (R - r_i2) / (r_f - r_i2 + alpha (r_i1 - r_i2))``.
    Both are 0 when the rate is low enough that a single interferer never hurts.
    """
    mode = VulnerableMode(mode)
    snr = spec.signal_power / spec.noise_power
    sinr_1 = spec.signal_power / (spec.noise_power + spec.signal_power)
    if mode is VulnerableMode.CODED:
        r_f = math.log2(1.0 + snr)
        r_i = math.log2(1.0 + sinr_1)
        if spec.rate > r_f:
            raise ParameterError(f"rate unreachable: R={spec.rate} > log2(1+P/N)={r_f:.4f}")
        if spec.rate < r_i:
            return 0.0
        return (spec.rate - r_i) / (r_f - r_i)
    r_f = math.log2(1.0 + 2.0 * snr)
    r_i1 = math.log2(1.0 + snr + sinr_1)
    r_i2 = math.log2(1.0 + 2.0 * sinr_1)
    if spec.rate > r_f:
        raise ParameterError(f"rate unreachable: R={spec.rate} > log2(1+2P/N)={r_f:.4f}")
    if spec.rate < r_i2:
        return 0.0
    return (spec.rate - r_i2) / (r_f - r_i2 + spec.alpha * (r_i1 - r_i2))


def vulnerable_period(mode: VulnerableMode | str, spec: VulnerableSpec) -> float:
    """Vulnerable period in packet durations: ``2 phi`` (coded) or ``2 phi (1 + alpha/2)`` (MRC)."""
    phi = vulnerable_fraction(mode, spec)
    if VulnerableMode(mode) is VulnerableMode.CODED:
        return 2.0 * phi
    return 2.0 * phi * (1.0 + spec.alpha / 2.0)


def async_plr_approx(load: float, degree: int, frame_packets: int, vulnerable_packets: float,
                     tail_tol: float = 1e-12) -> float:
    """Two-user unresolvable-pattern approximation of the asynchronous PLR.

    ``p_l ~ sum_{m>=2} Pois(n_p G; m) * C(m,2) / (d C(n_v, d)) * 2/m`` with
    ``n_v = floor(n_p / T_v)`` disjoint vulnerable periods per virtual frame.
    The series is summed until the remaining Poisson tail is below ``tail_tol``.
    """
    if load < 0:
        raise ParameterError("load must be >= 0")
    if vulnerable_packets <= 0:
        return 0.0
    n_v = math.floor(frame_packets / vulnerable_packets)
    if n_v < degree:
        raise ParameterError(f"approximation undefined: n_v={n_v} < d={degree}")
    lam = frame_packets * load
    if lam == 0:
        return 0.0
    denom = degree * special.comb(n_v, degree, exact=False)
    m_hi = int(stats.poisson.isf(tail_tol, lam)) + 2
    m = np.arange(2, max(m_hi, 3) + 1)
    pmf = stats.poisson.pmf(m, lam)
    return float(np.sum(pmf * special.comb(m, 2) / denom * 2.0 / m))
