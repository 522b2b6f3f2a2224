"""Sync-word detection and replica matching for pointer-free ECRA.

Samples are taken at symbol rate after matched filtering, one complex value
per symbol, with unit symbol energy so the noise variance per complex sample
is ``1 / (Es/N0)``. Every packet starts with a common ``n_sw``-symbol BPSK
sync word followed by random BPSK data. Each user has its own frequency
offset, uniform in ``[-f_max, f_max]``, and each replica draws its own carrier
phase.

Phase one slides a test interval over the window and keeps positions whose
metric exceeds a threshold. Phase two takes each candidate, looks at the
candidates on the replica grid around it and ranks them by the non-coherent
correlation of the full packets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy import stats

from .channels import ParameterError

MIN_ROC_TRIALS = 10_000


def sync_word_from_hex(word: str = "1ACFFC1D") -> np.ndarray:
    """BPSK expansion of a hexadecimal sync word, bit 0 -> +1 and bit 1 -> -1, MSB first."""
    bits = bin(int(word, 16))[2:].zfill(4 * len(word))
    return np.array([1.0 - 2.0 * int(b) for b in bits])


DEFAULT_SYNC_WORD = sync_word_from_hex()


@dataclass(frozen=True)
class DetectConfig:
    """Parameters of the two-phase receiver.

    ``es_n0`` is linear. ``n_s`` counts all symbols of a packet including the
    sync word. ``delta_t`` is the replica grid and ``n_p`` the virtual frame,
    both in packet durations; ``window`` is the receiver window in packet
    durations.
    """

    sync_word: np.ndarray = field(default_factory=lambda: DEFAULT_SYNC_WORD.copy())
    n_s: int = 1000
    es_n0: float = 10.0
    f_max_ts: float = 0.01
    delta_t: int = 1
    n_p: int = 100
    window: int = 100
    degree: int = 2
    threshold: float = 0.0

    def __post_init__(self) -> None:
        sw = np.asarray(self.sync_word, dtype=float)
        if sw.ndim != 1 or sw.size == 0 or not np.all(np.abs(sw) == 1.0):
            raise ParameterError("sync word must be a non-empty +-1 sequence")
        object.__setattr__(self, "sync_word", sw)
        if sw.size > self.n_s:
            raise ParameterError("sync word longer than the packet")
        if self.es_n0 <= 0:
            raise ParameterError("Es/N0 must be positive (linear)")
        if not 0.0 <= self.f_max_ts < 0.5:
            raise ParameterError("normalized frequency offset must lie in [0, 0.5)")
        if self.delta_t < 1 or self.n_p < self.degree * self.delta_t:
            raise ParameterError("virtual frame too short for the replica grid")
        if self.degree < 1 or self.window < 1:
            raise ParameterError("degree and window must be >= 1")

    @property
    def n_sw(self) -> int:
        return int(self.sync_word.size)

    @property
    def noise_var(self) -> float:
        """Per-sample complex noise variance ``2 sigma_n^2``."""
        return 1.0 / self.es_n0


def _check_pair(y: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=complex)
    s = np.asarray(s, dtype=float)
    if y.shape != s.shape:
        raise ParameterError(f"sample length {y.shape} does not match sync word length {s.shape}")
    return y, s


def soft_corr(y: np.ndarray, s: np.ndarray) -> float:
    """Non-coherent soft correlation ``|sum_i conj(y_i) s_i|``."""
    y, s = _check_pair(y, s)
    return float(abs(np.vdot(y, s)))


def interference_aware_metric(y: np.ndarray, s: np.ndarray, sigma_z2: float, sigma_n2: float) -> float:
    """Log-likelihood-ratio metric with Gaussian interference.

    With ``v = sigma_z2 + 2 sigma_n2`` and ``y~ = y / v`` the metric is
    ``2 |sum_i conj(y~_i) s_i| - n_sw / v``: averaging the unknown carrier
    phase gives ``I_0(2 |sum conj(y~) s|)`` and ``ln I_0(x)`` is replaced by
    ``x``. The factor 2 comes from expanding ``|y - s e^{j phi}|^2``.
    """
    y, s = _check_pair(y, s)
    if sigma_z2 < 0 or sigma_n2 <= 0:
        raise ParameterError("need sigma_z2 >= 0 and sigma_n2 > 0")
    v = sigma_z2 + 2.0 * sigma_n2
    return float(2.0 * abs(np.vdot(y / v, s)) - s.size / v)


def estimate_interference(y: np.ndarray, noise_var: float) -> float:
    """Interference power of a test interval: sample power less noise and one unit signal, floored at 0."""
    return max(float(np.mean(np.abs(y) ** 2)) - noise_var - 1.0, 0.0)


def _aware_from(corr: np.ndarray, power: np.ndarray, n_sw: int, noise_var: float) -> np.ndarray:
    # vectorised interference_aware_metric with the interference estimated from the sample power
    v = np.maximum(power - noise_var - 1.0, 0.0) + noise_var
    return (2.0 * corr - n_sw) / v


# --------------------------------------------------------------------------
# single test intervals


@numba.njit(cache=True)
def _interval_metrics(trials, hyp, lam, n_s, sync, noise_var, f_max, rng):
    # |correlation| and mean sample power of every test interval
    n_sw = sync.size
    soft = np.empty(trials)
    mean_power = np.empty(trials)
    buf = np.empty(n_sw, dtype=np.complex128)
    span = n_s + n_sw - 1
    mean_k = lam * span / n_s
    sd = math.sqrt(noise_var / 2.0)
    for t in range(trials):
        buf[:] = 0.0
        if hyp == 1:
            phi = 2.0 * math.pi * rng.random()
            f = f_max * (2.0 * rng.random() - 1.0)
            for i in range(n_sw):
                sym = sync[i]
                ang = phi + 2.0 * math.pi * f * i
                buf[i] += sym * complex(math.cos(ang), math.sin(ang))
        k = rng.poisson(mean_k)
        for _ in range(k):
            while True:
                st = -n_s + 1 + int(rng.random() * span)
                if hyp == 1 or st != 0:
                    break
            phi = 2.0 * math.pi * rng.random()
            f = f_max * (2.0 * rng.random() - 1.0)
            for i in range(n_sw):
                pos = i - st
                if pos < 0 or pos >= n_s:
                    continue
                sym = sync[pos] if pos < n_sw else (1.0 if rng.random() < 0.5 else -1.0)
                ang = phi + 2.0 * math.pi * f * pos
                buf[i] += sym * complex(math.cos(ang), math.sin(ang))
        # no sync word aligned: the epoch estimate is off by a uniform
        # fraction of a symbol, which attenuates every signal sample
        gain = 1.0 - rng.random() if hyp == 0 else 1.0
        corr = 0.0 + 0.0j
        power = 0.0
        for i in range(n_sw):
            v = gain * buf[i]
            v += complex(sd * rng.standard_normal(), sd * rng.standard_normal())
            corr += v * sync[i]
            power += v.real * v.real + v.imag * v.imag
        soft[t] = abs(corr)
        mean_power[t] = power / n_sw
    return soft, mean_power


@dataclass(frozen=True)
class MetricSamples:
    """Metric draws for test intervals without (``h0``) and with (``h1``) an aligned sync word."""

    h0_soft: np.ndarray
    h0_aware: np.ndarray
    h1_soft: np.ndarray
    h1_aware: np.ndarray

    def pick(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        if metric == "soft":
            return self.h0_soft, self.h1_soft
        if metric == "aware":
            return self.h0_aware, self.h1_aware
        raise ParameterError(f"unknown metric {metric!r}; use 'soft' or 'aware'")


def metric_samples(load: float, trials: int, seed: int, config: DetectConfig | None = None) -> MetricSamples:
    """Draw both metrics on independent test intervals.

    Interfering packets start uniformly on the symbol grid with rate
    ``d G / n_s`` per symbol, since every user sends ``d`` replicas. Under
    the no-sync hypothesis the receiver samples with a uniform fractional
    epoch error ``delta``, modelled as an amplitude factor ``1 - delta`` on all
    signal samples of the test interval.
    """
    config = config or DetectConfig()
    if load < 0:
        raise ParameterError("load must be >= 0")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    lam = load * config.degree
    seq0, seq1 = np.random.SeedSequence(seed).spawn(2)
    args = (lam, config.n_s, config.sync_word, config.noise_var, config.f_max_ts)
    c0, p0 = _interval_metrics(int(trials), 0, *args, np.random.default_rng(seq0))
    c1, p1 = _interval_metrics(int(trials), 1, *args, np.random.default_rng(seq1))
    n_sw, nv = config.n_sw, config.noise_var
    return MetricSamples(c0, _aware_from(c0, p0, n_sw, nv), c1, _aware_from(c1, p1, n_sw, nv))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    p_f: float
    p_d: float
    p_f_ci: tuple[float, float]
    p_d_ci: tuple[float, float]
    trials: int


def roc_from_samples(samples: MetricSamples, thresholds: Sequence[float], metric: str = "soft") -> list[RocPoint]:
    """Empirical ROC with Wilson intervals; a test fires when the metric exceeds the threshold."""
    h0, h1 = samples.pick(metric)
    h0s, h1s = np.sort(h0), np.sort(h1)
    out = []
    for psi in thresholds:
        k0 = int(h0s.size - np.searchsorted(h0s, psi, side="right"))
        k1 = int(h1s.size - np.searchsorted(h1s, psi, side="right"))
        out.append(RocPoint(float(psi), k0 / h0s.size, k1 / h1s.size, wilson_interval(k0, h0s.size),
                            wilson_interval(k1, h1s.size), int(h0s.size)))
    return out


def roc_estimate(load: float, es_n0: float, thresholds: Sequence[float], trials: int, seed: int,
                 metric: str = "soft", config: DetectConfig | None = None) -> list[RocPoint]:
    """ROC of the sync-word test at channel load ``G`` and linear ``Es/N0``.

    ``trials`` test intervals are drawn under each hypothesis and the same
    draws serve every threshold, so the curve is monotone by construction.
    """
    if trials < MIN_ROC_TRIALS:
        raise ParameterError(f"ROC estimation needs at least {MIN_ROC_TRIALS} trials per hypothesis")
    base = config or DetectConfig()
    cfg = DetectConfig(base.sync_word, base.n_s, float(es_n0), base.f_max_ts, base.delta_t, base.n_p,
                       base.window, base.degree, base.threshold)
    return roc_from_samples(metric_samples(load, trials, seed, cfg), thresholds, metric)


def calibrate_threshold(load: float, p_f: float, trials: int, seed: int, config: DetectConfig | None = None,
                        metric: str = "soft") -> float:
    """Smallest threshold whose empirical false-alarm rate is at most ``p_f``."""
    if not 0.0 < p_f < 1.0:
        raise ParameterError("target false-alarm probability must lie in (0, 1)")
    h0, _ = metric_samples(load, trials, seed, config).pick(metric)
    h0 = np.sort(h0)
    allowed = int(math.floor(p_f * h0.size))
    return float(h0[h0.size - allowed - 1])


# --------------------------------------------------------------------------
# full receiver windows


@numba.njit(cache=True)
def _render(length, starts, user_of, phases, freqs, data, n_s, noise_var, rng):
    y = np.empty(length, dtype=np.complex128)
    sd = math.sqrt(noise_var / 2.0)
    for i in range(length):
        y[i] = complex(sd * rng.standard_normal(), sd * rng.standard_normal())
    for r in range(starts.size):
        st = starts[r]
        u = user_of[r]
        for pos in range(n_s):
            i = st + pos
            if i < 0:
                continue
            if i >= length:
                break
            ang = phases[r] + 2.0 * math.pi * freqs[u] * pos
            y[i] += data[u, pos] * complex(math.cos(ang), math.sin(ang))
    return y


@dataclass(frozen=True)
class WindowRealization:
    """Received samples of one window and the replica starts of every user (one row per user)."""

    samples: np.ndarray
    starts: np.ndarray


def simulate_window(load: float, config: DetectConfig, rng: np.random.Generator) -> WindowRealization:
    """Draw a receiver window at channel load ``G``.

    Users arrive uniformly on the symbol grid from one virtual frame before
    the window start, so the window is fully loaded. A user's replicas sit at
    distinct multiples of ``delta_t`` after its arrival, the first one at the
    arrival itself; replicas of one user share data and frequency offset.
    """
    n_s = config.n_s
    length = config.window * n_s
    frame = config.n_p * n_s
    n_users = rng.poisson(load * (length + frame) / n_s)
    arrivals = rng.integers(-frame, length, size=n_users)
    slots = config.n_p // config.delta_t
    starts = np.empty((n_users, config.degree), dtype=np.int64)
    for u in range(n_users):
        k = np.sort(rng.choice(np.arange(1, slots), size=config.degree - 1, replace=False))
        starts[u] = arrivals[u] + np.concatenate(([0], k)) * config.delta_t * n_s
    data = rng.choice([-1.0, 1.0], size=(n_users, n_s))
    data[:, : config.n_sw] = config.sync_word
    freqs = config.f_max_ts * (2.0 * rng.random(n_users) - 1.0)
    phases = 2.0 * np.pi * rng.random(n_users * config.degree)
    flat = starts.ravel()
    user_of = np.repeat(np.arange(n_users), config.degree)
    y = _render(length, flat, user_of, phases, freqs, data, n_s, config.noise_var, rng)
    return WindowRealization(y, starts)


def _sliding_metric(window: np.ndarray, config: DetectConfig, metric: str) -> np.ndarray:
    s = config.sync_word
    corr = np.abs(np.correlate(window, s.astype(complex), mode="valid"))
    if metric == "soft":
        return corr
    if metric != "aware":
        raise ParameterError(f"unknown metric {metric!r}; use 'soft' or 'aware'")
    csum = np.concatenate(([0.0], np.cumsum(np.abs(window) ** 2)))
    power = (csum[s.size:] - csum[: -s.size]) / s.size
    return _aware_from(corr, power, s.size, config.noise_var)


def detect_candidates(window: np.ndarray, config: DetectConfig, metric: str = "soft") -> np.ndarray:
    """Sorted start positions whose test interval exceeds ``config.threshold``.

    Every position ``0 .. len(window) - n_sw`` is tested.
    """
    window = np.asarray(window, dtype=complex)
    if window.size <= config.n_sw:
        raise ParameterError("window must be longer than the sync word")
    return np.flatnonzero(_sliding_metric(window, config, metric) > config.threshold)


def _match_one(window: np.ndarray, fits: np.ndarray, tau: int, config: DetectConfig) -> tuple[int, ...]:
    n_s = config.n_s
    if tau + n_s > window.size:
        return (int(tau),)
    diff = fits - tau
    ok = (diff != 0) & (diff % (config.delta_t * n_s) == 0) & (np.abs(diff) <= (config.n_p - 1) * n_s)
    partners = fits[ok]
    if partners.size < config.degree - 1:
        return (int(tau),)
    ref = window[tau: tau + n_s]
    scores = np.array([abs(np.vdot(window[p: p + n_s], ref)) for p in partners])
    best = partners[np.argsort(-scores, kind="stable")[: config.degree - 1]]
    return tuple(sorted([int(tau), *(int(b) for b in best)]))


def match_replicas(window: np.ndarray, candidates: Sequence[int], config: DetectConfig) -> list[tuple[int, ...]]:
    """Group every candidate with its ``d - 1`` most correlated partners.

    A partner is compatible when it lies a non-zero multiple of ``delta_t``
    away within one virtual frame and its full packet fits in the window.
    Compatible partners are ranked by ``|sum_j y1_j conj(y_i_j)|`` over the
    full packet. Groups are returned as sorted start tuples, one per
    candidate; a candidate with too few compatible partners stays alone.
    """
    window = np.asarray(window, dtype=complex)
    cands = np.asarray(candidates, dtype=np.int64)
    fits = cands[cands + config.n_s <= window.size]
    return [_match_one(window, fits, int(tau), config) for tau in cands]


@dataclass(frozen=True)
class CombiningStats:
    load: float
    p_d: float
    p_cc: float
    replicas: int
    users: int


def combining_probabilities(load: float, config: DetectConfig, windows: int, seed: int,
                            metric: str = "soft") -> CombiningStats:
    """Detection and correct-combining probabilities over independent windows.

    ``P_D`` is the fraction of replicas fully inside a window whose start is a
    candidate. A user whose replicas all lie inside the window is correctly
    combined when every replica is detected and the group formed around its
    first replica is exactly its own set of replicas.
    """
    if windows < 1:
        raise ParameterError("windows must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    det = tot = ok_users = users = 0
    for _ in range(windows):
        real = simulate_window(load, config, rng)
        cands = detect_candidates(real.samples, config, metric)
        fits = cands[cands + config.n_s <= real.samples.size]
        cset = set(cands.tolist())
        inside = (real.starts >= 0) & (real.starts + config.n_s <= real.samples.size)
        tot += int(inside.sum())
        det += sum(int(st) in cset for st in real.starts[inside])
        for u in np.flatnonzero(inside.all(axis=1)):
            users += 1
            own = tuple(int(s) for s in real.starts[u])
            if all(s in cset for s in own) and _match_one(real.samples, fits, own[0], config) == own:
                ok_users += 1
    p_d = det / tot if tot else 0.0
    p_cc = ok_users / users if users else 0.0
    return CombiningStats(float(load), p_d, p_cc, tot, users)
