"""Symbol-level simulation of asynchronous replica schemes (ALOHA, CRA, ECRA).

Time runs on a grid of ``n_s`` positions per packet duration, so a packet
covers exactly ``n_s`` grid symbols and overlaps are integer bookkeeping.
Every user draws ``d`` non-overlapping replicas inside its own virtual frame
of ``n_p`` packet durations, the first one at its arrival time. All users are
received with the same power ``P`` over AWGN with power ``N``; a packet at
rate ``R`` is decoded when the mean of ``log2(1 + SINR)`` over its symbols is
at least ``R``.

The receiver observes a sliding window of ``W`` packet durations moved by
``dW`` each step. In every window it first runs SIC on single replicas. ECRA
then builds, for every user still undecoded, a combined observation of its
replicas (selection combining takes the best SINR per symbol, maximal-ratio
combining sums SINRs), tries to decode it, and returns to SIC on success.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .channels import ChannelModel, ChannelSpec, ParameterError
from .results import SimResult

DEFAULT_MAX_SIC = 10
DEFAULT_MAX_SIC_PHASE2 = 10

# relative slack on the decoding inequality, absorbs summation round-off
_RATE_SLACK = 1e-12


class Combining(str, enum.Enum):
    NONE = "none"
    SC = "sc"
    MRC = "mrc"


_MODE_CODE = {Combining.NONE: 0, Combining.SC: 1, Combining.MRC: 2}


class AsyncScheme(str, enum.Enum):
    ALOHA = "ALOHA"
    CRA = "CRA"
    ECRA_SC = "ECRA_SC"
    ECRA_MRC = "ECRA_MRC"


@dataclass(frozen=True)
class VirtualFrameConfig:
    """Geometry of the virtual frame and of the receiver window.

    Durations are in packet lengths: ``n_p`` is the virtual frame, ``window``
    the decoder window ``W`` and ``shift`` its step ``dW``. ``n_s`` is the
    number of grid symbols per packet.
    """

    n_p: int = 200
    n_s: int = 100
    degree: int = 2
    window: int = 600
    shift: int = 20

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ParameterError("degree must be >= 1")
        if self.n_p < self.degree:
            raise ParameterError(f"n_p={self.n_p} cannot hold {self.degree} non-overlapping replicas")
        if self.n_s < 1:
            raise ParameterError("n_s must be >= 1")
        if self.window < self.n_p:
            raise ParameterError("window must be at least one virtual frame")
        if not 1 <= self.shift <= self.window:
            raise ParameterError("window shift must lie in [1, window]")


def _sinr_table(signal_power: float, noise_power: float, size: int) -> np.ndarray:
    # gtab[c]: SINR of a replica on a symbol covered by c replicas in total
    c = np.arange(size, dtype=float)
    g = signal_power / (noise_power + np.maximum(c - 1.0, 0.0) * signal_power)
    g[0] = 0.0
    return g


def combined_profile(replica_profiles: Sequence[np.ndarray], mode: Combining | str,
                     signal_power: float, noise_power: float) -> np.ndarray:
    """Per-symbol SINR of a combined observation.

    Each profile holds the number of interferers ``m_i`` seen by one replica
    on every symbol, giving ``gamma_i = P / (N + m_i P)``. Selection combining
    keeps the largest SINR per symbol and maximal-ratio combining adds them.
    Without combining exactly one profile is expected.
    """
    mode = Combining(mode)
    profiles = [np.asarray(p, dtype=float) for p in replica_profiles]
    if not profiles:
        raise ParameterError("at least one replica profile is needed")
    n = profiles[0].size
    if any(p.size != n for p in profiles):
        raise ParameterError("replica profiles differ in length")
    if mode is Combining.NONE and len(profiles) != 1:
        raise ParameterError("no-combining mode takes exactly one profile")
    gammas = np.stack([signal_power / (noise_power + p * signal_power) for p in profiles])
    if mode is Combining.MRC:
        return gammas.sum(axis=0)
    return gammas.max(axis=0)


@numba.njit(cache=True)
def _place_user(arrival, n_p, n_s, degree, rng):
    starts = np.empty(degree, dtype=np.int64)
    starts[0] = arrival
    k = degree - 1
    if k == 0:
        return starts
    # Sorted offsets x_1 < .. < x_k in [n_s, (n_p - 1) n_s] with gaps >= n_s map
    # one-to-one onto distinct y_i = x_i - (i - 1)(n_s - 1), so drawing k
    # distinct values uniformly gives a uniform non-overlapping layout.
    lo = n_s
    size = (n_p - 2) * n_s + 1 - (k - 1) * (n_s - 1)
    picks = np.empty(k, dtype=np.int64)
    for r in range(k):
        while True:
            y = lo + int(rng.random() * size)
            fresh = True
            for j in range(r):
                if picks[j] == y:
                    fresh = False
                    break
            if fresh:
                break
        picks[r] = y
    picks.sort()
    for r in range(k):
        starts[r + 1] = arrival + picks[r] + r * (n_s - 1)
    return starts


def place_user(vf: VirtualFrameConfig, arrival_symbol: int, rng: np.random.Generator) -> np.ndarray:
    """Replica start symbols of one user.

    The first replica starts at the arrival. The other ``d - 1`` start on the
    grid within ``[arrival + n_s, arrival + (n_p - 1) n_s]`` and the layout is
    uniform over all placements in which no two replicas of the user overlap.
    They are returned in increasing order after the first.
    """
    return _place_user(int(arrival_symbol), vf.n_p, vf.n_s, vf.degree, rng)


@numba.njit(cache=True)
def _mark_overlaps(s0, n_s, srt_start, srt_user, dirty1, dirty2):
    lo = np.searchsorted(srt_start, s0 - n_s + 1, side="left")
    hi = np.searchsorted(srt_start, s0 + n_s - 1, side="right")
    for k in range(lo, hi):
        dirty1[srt_user[k]] = True
        dirty2[srt_user[k]] = True


@numba.njit(cache=True)
def _cancel(u, starts, counts, n_s, srt_start, srt_user, dirty1, dirty2):
    for r in range(starts.shape[1]):
        s0 = starts[u, r]
        for i in range(s0, s0 + n_s):
            counts[i] -= 1
        _mark_overlaps(s0, n_s, srt_start, srt_user, dirty1, dirty2)


@numba.njit(cache=True)
def _process_window(ws, we, lo, hi, starts, counts, decoded, dirty1, dirty2, srt_start, srt_user,
                    n_s, need, logtab, gtab, mode, max_sic, max_p2):
    """Decode inside window ``[ws, we)`` for users ``lo..hi-1``; returns decodes."""
    degree = starts.shape[1]
    n_new = 0
    rounds = 0
    while True:
        for _ in range(max_sic):
            progress = False
            for u in range(lo, hi):
                if decoded[u] or not dirty1[u]:
                    continue
                ok = False
                for r in range(degree):
                    s0 = starts[u, r]
                    if s0 < ws or s0 + n_s > we:
                        continue
                    total = 0.0
                    for i in range(s0, s0 + n_s):
                        total += logtab[counts[i]]
                    if total >= need:
                        ok = True
                        break
                if ok:
                    decoded[u] = True
                    n_new += 1
                    progress = True
                    _cancel(u, starts, counts, n_s, srt_start, srt_user, dirty1, dirty2)
                else:
                    dirty1[u] = False
            if not progress:
                break
        if mode == 0 or rounds >= max_p2:
            break
        rounds += 1
        progress2 = False
        for u in range(lo, hi):
            if decoded[u] or not dirty2[u]:
                continue
            n_in = 0
            for r in range(degree):
                s0 = starts[u, r]
                if s0 >= ws and s0 + n_s <= we:
                    n_in += 1
            if n_in < 2:
                dirty2[u] = False
                continue
            total = 0.0
            for j in range(n_s):
                if mode == 1:
                    best = 1 << 30
                    for r in range(degree):
                        s0 = starts[u, r]
                        if s0 >= ws and s0 + n_s <= we:
                            c = counts[s0 + j]
                            if c < best:
                                best = c
                    total += logtab[best]
                else:
                    acc = 0.0
                    for r in range(degree):
                        s0 = starts[u, r]
                        if s0 >= ws and s0 + n_s <= we:
                            acc += gtab[counts[s0 + j]]
                    total += np.log2(1.0 + acc)
            if total >= need:
                decoded[u] = True
                n_new += 1
                progress2 = True
                _cancel(u, starts, counts, n_s, srt_start, srt_user, dirty1, dirty2)
            else:
                dirty2[u] = False
        if not progress2:
            break
    return n_new


def _tables(signal_power: float, noise_power: float, max_count: int) -> tuple[np.ndarray, np.ndarray]:
    gtab = _sinr_table(signal_power, noise_power, max_count + 2)
    return np.log2(1.0 + gtab), gtab


def _sorted_replicas(starts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = starts.ravel()
    order = np.argsort(flat, kind="stable")
    users = np.repeat(np.arange(starts.shape[0]), starts.shape[1])
    return flat[order], users[order]


def _coverage(starts: np.ndarray, n_s: int, length: int) -> np.ndarray:
    diff = np.zeros(length + 1, dtype=np.int64)
    flat = starts.ravel()
    np.add.at(diff, flat, 1)
    np.add.at(diff, flat + n_s, -1)
    return np.cumsum(diff[:-1]).astype(np.int32)


@dataclass
class WindowState:
    """Replica layout observed by the receiver in a single window.

    ``starts[u]`` lists the start symbols of user ``u``'s replicas. Symbols run
    over ``[0, length)`` and the whole range is one window.
    """

    n_s: int
    length: int
    starts: np.ndarray

    @classmethod
    def from_placements(cls, n_s: int, length: int, placements: Sequence[Sequence[int]]) -> "WindowState":
        starts = np.array(placements, dtype=np.int64)
        if starts.ndim != 2:
            raise ParameterError("every user needs the same number of replicas")
        if starts.size and (starts.min() < 0 or starts.max() + n_s > length):
            raise ParameterError("replicas must lie inside the window")
        return cls(n_s, length, starts)

    def interference_profile(self, user: int, replica: int) -> np.ndarray:
        """Interferer count on every symbol of one replica, before any cancellation."""
        cov = _coverage(self.starts, self.n_s, self.length)
        s0 = self.starts[user, replica]
        return cov[s0:s0 + self.n_s] - 1


def run_ecra_window(state: WindowState, channel: ChannelSpec, mode: Combining | str,
                    max_sic: int = DEFAULT_MAX_SIC, max_sic_phase2: int = DEFAULT_MAX_SIC_PHASE2) -> np.ndarray:
    """Decode one window with perfect knowledge of replica positions.

    Phase one repeats SIC sweeps over single replicas. Phase two tries the
    combined observation of every undecoded user; each success cancels all
    replicas of that user and hands control back to phase one. Returns the
    sorted indices of decoded users.
    """
    mode = Combining(mode)
    n_users = state.starts.shape[0]
    if n_users == 0:
        return np.empty(0, dtype=np.int64)
    counts = _coverage(state.starts, state.n_s, state.length)
    logtab, gtab = _tables(channel.signal_power, channel.noise_power, int(counts.max()))
    srt_start, srt_user = _sorted_replicas(state.starts)
    decoded = np.zeros(n_users, dtype=np.bool_)
    dirty1 = np.ones(n_users, dtype=np.bool_)
    dirty2 = np.ones(n_users, dtype=np.bool_)
    need = channel.rate * state.n_s * (1.0 - _RATE_SLACK)
    _process_window(0, state.length, 0, n_users, state.starts, counts, decoded, dirty1, dirty2,
                    srt_start, srt_user, state.n_s, need, logtab, gtab, _MODE_CODE[mode],
                    int(max_sic), int(max_sic_phase2))
    return np.flatnonzero(decoded)


@numba.njit(cache=True)
def _draw_traffic(load, length_packets, n_p, n_s, degree, rng):
    n_users = rng.poisson(load * length_packets)
    times = np.sort(rng.random(n_users)) * length_packets
    arrivals = np.empty(n_users, dtype=np.int64)
    starts = np.empty((n_users, degree), dtype=np.int64)
    for u in range(n_users):
        arrivals[u] = int(times[u] * n_s)
        starts[u, :] = _place_user(arrivals[u], n_p, n_s, degree, rng)
    return arrivals, starts


@numba.njit(cache=True)
def _slide(arrivals, starts, counts, decoded, srt_start, srt_user, n_s, frame_sym, window_sym,
           shift_sym, end_sym, need, logtab, gtab, mode, max_sic, max_p2):
    n_users = arrivals.size
    dirty1 = np.ones(n_users, dtype=np.bool_)
    dirty2 = np.ones(n_users, dtype=np.bool_)
    ws = 0
    prev_we = -1
    while True:
        we = ws + window_sym
        if prev_we >= 0:
            # replicas that became fully visible need a fresh look
            a = np.searchsorted(srt_start, prev_we - n_s + 1, side="left")
            b = np.searchsorted(srt_start, we - n_s, side="right")
            for k in range(a, b):
                dirty1[srt_user[k]] = True
                dirty2[srt_user[k]] = True
        lo = np.searchsorted(arrivals, ws - frame_sym, side="left")
        hi = np.searchsorted(arrivals, we, side="left")
        _process_window(ws, we, lo, hi, starts, counts, decoded, dirty1, dirty2, srt_start, srt_user,
                        n_s, need, logtab, gtab, mode, max_sic, max_p2)
        if we >= end_sym:
            break
        prev_we = we
        ws += shift_sym


def _scheme_setup(scheme: AsyncScheme, vf: VirtualFrameConfig) -> tuple[VirtualFrameConfig, Combining]:
    if scheme is AsyncScheme.ALOHA:
        return VirtualFrameConfig(vf.n_p, vf.n_s, 1, vf.window, vf.shift), Combining.NONE
    if scheme is AsyncScheme.CRA:
        return vf, Combining.NONE
    return vf, Combining.SC if scheme is AsyncScheme.ECRA_SC else Combining.MRC


def simulate_async(scheme: AsyncScheme | str, load: float, vf: VirtualFrameConfig, channel: ChannelSpec,
                   sim_length_packets: int, seed: int, max_sic: int = DEFAULT_MAX_SIC,
                   max_sic_phase2: int = DEFAULT_MAX_SIC_PHASE2) -> SimResult:
    """Throughput and packet loss rate of a sliding-window receiver.

    Users arrive as a Poisson process of intensity ``G`` per packet duration
    over ``sim_length_packets``. Only users arriving in
    ``[W, sim_length - W)`` are counted, so every counted user sees a fully
    loaded channel. A user is lost when it is still undecoded once its last
    replica has left the window. ``throughput`` is decoded counted users per
    packet duration of the counted span.
    """
    scheme = AsyncScheme(scheme)
    if channel.model is not ChannelModel.BLOCK_INTERFERENCE:
        raise ParameterError("asynchronous simulation uses the block-interference channel")
    if sim_length_packets < 3 * vf.window:
        raise ParameterError(f"sim_length_packets must be >= 3W = {3 * vf.window}")
    if load < 0:
        raise ParameterError("load must be >= 0")
    vf_eff, mode = _scheme_setup(scheme, vf)
    span = sim_length_packets - 2 * vf.window
    if load == 0:
        return SimResult(load=0.0, throughput=0.0, plr=0.0, trials=0, users=0, half_width_95=0.0,
                         throughput_half_width=0.0, spectral_efficiency=0.0, normalized_capacity=0.0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n_s = vf_eff.n_s
    arrivals, starts = _draw_traffic(float(load), int(sim_length_packets), vf_eff.n_p, n_s, vf_eff.degree, rng)
    frame_sym = vf_eff.n_p * n_s
    end_sym = int(starts.max()) + n_s if arrivals.size else sim_length_packets * n_s
    counts = _coverage(starts, n_s, end_sym)
    logtab, gtab = _tables(channel.signal_power, channel.noise_power, int(counts.max(initial=0)))
    srt_start, srt_user = _sorted_replicas(starts)
    decoded = np.zeros(arrivals.size, dtype=np.bool_)
    need = channel.rate * n_s * (1.0 - _RATE_SLACK)
    _slide(arrivals, starts, counts, decoded, srt_start, srt_user, n_s, frame_sym, vf_eff.window * n_s,
           vf_eff.shift * n_s, end_sym, need, logtab, gtab, _MODE_CODE[mode], int(max_sic), int(max_sic_phase2))

    lo = vf.window * n_s
    hi = (sim_length_packets - vf.window) * n_s
    counted = (arrivals >= lo) & (arrivals < hi)
    users = int(counted.sum())
    ok = int((decoded & counted).sum())
    throughput = ok / span
    plr = 1.0 - ok / users if users else 0.0
    z = 1.959963984540054
    p_hw = z * math.sqrt(plr * (1.0 - plr) / users) if users else 0.0
    s_hw = z * math.sqrt(ok) / span  # Poisson count approximation
    xi = throughput * channel.rate
    aggregate = load * vf_eff.degree * channel.signal_power
    eta = xi / math.log2(1.0 + aggregate / channel.noise_power)
    return SimResult(load=float(load), throughput=float(throughput), plr=float(plr), trials=users, users=users,
                     half_width_95=float(p_hw), throughput_half_width=float(s_hw),
                     spectral_efficiency=float(xi), normalized_capacity=float(eta))
