"""Frame-based Monte-Carlo simulation of SA, DSA, CRDSA and IRSA.

A MAC frame of ``m_s`` slots is shared by a batch of users. Each user sends
``d`` replicas of its packet in ``d`` distinct slots, with ``d`` fixed (DSA,
CRDSA) or drawn from a :class:`DegreeDistribution` (IRSA). The receiver
sweeps the slots in order. On the collision channel it decodes replicas that
are alone in their slot; on the Rayleigh block-fading channel it repeatedly
captures the strongest replica whose SINR clears the threshold. Every decoded
packet is cancelled from all slots holding one of its replicas, which can
free further replicas in later sweeps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .channels import ChannelModel, ChannelSpec, ParameterError
from .degree import DegreeDistribution
from .results import SimResult

__all__ = [
    "DegreeDistribution",
    "FrameGraph",
    "Scheme",
    "SimResult",
    "build_frame",
    "sic_capture",
    "sic_collision",
    "decode_frame",
    "simulate_slotted",
]

DEFAULT_MAX_ITERS = 20

# decoder modes understood by the kernels
_MODE_COLLISION_SIC = 0
_MODE_CAPTURE_SIC = 1
_MODE_COLLISION_PLAIN = 2
_MODE_CAPTURE_PLAIN = 3


class Scheme(str, enum.Enum):
    SA = "SA"
    DSA = "DSA"
    CRDSA = "CRDSA"
    IRSA = "IRSA"


@dataclass(frozen=True)
class FrameGraph:
    """Bipartite user/slot graph of one frame in compressed form.

    The replicas of user ``u`` are the edges ``user_ptr[u]:user_ptr[u+1]``;
    ``edge_slot`` gives their slot and ``edge_snr`` their received SNR (1.0
    on the collision channel).
    """

    m_s: int
    user_ptr: np.ndarray
    edge_slot: np.ndarray
    edge_snr: np.ndarray
    n_users: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_users", int(self.user_ptr.size - 1))

    @classmethod
    def from_placements(cls, m_s: int, placements: Sequence[Sequence[int]],
                        snrs: Sequence[Sequence[float]] | None = None) -> "FrameGraph":
        """Build a frame from explicit per-user slot lists."""
        ptr = np.zeros(len(placements) + 1, dtype=np.int64)
        for u, slots in enumerate(placements):
            if len(set(slots)) != len(slots):
                raise ParameterError(f"user {u} uses a slot twice")
            if any(not 0 <= s < m_s for s in slots):
                raise ParameterError(f"user {u} has a slot outside the frame")
            ptr[u + 1] = ptr[u] + len(slots)
        edge_slot = np.array([s for slots in placements for s in slots], dtype=np.int64)
        if snrs is None:
            edge_snr = np.ones(edge_slot.size)
        else:
            edge_snr = np.array([b for row in snrs for b in row], dtype=float)
        return cls(m_s, ptr, edge_slot, edge_snr)

    def slot_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_slot, minlength=self.m_s)

    def without_user(self, u: int) -> "FrameGraph":
        """The same frame with user ``u`` removed (later users shift down by one)."""
        lo, hi = self.user_ptr[u], self.user_ptr[u + 1]
        ptr = np.concatenate([self.user_ptr[:u + 1], self.user_ptr[u + 2:] - (hi - lo)])
        keep = np.r_[0:lo, hi:self.edge_slot.size]
        return FrameGraph(self.m_s, ptr, self.edge_slot[keep], self.edge_snr[keep])


@numba.njit(cache=True)
def _place(n_users, m_s, deg_vals, deg_cdf, fading, mean_snr, rng):
    degrees = np.empty(n_users, dtype=np.int64)
    for u in range(n_users):
        k = np.searchsorted(deg_cdf, rng.random(), side="right")
        if k >= deg_vals.size:
            k = deg_vals.size - 1
        degrees[u] = deg_vals[k]
    ptr = np.zeros(n_users + 1, dtype=np.int64)
    for u in range(n_users):
        ptr[u + 1] = ptr[u] + degrees[u]
    edge_slot = np.empty(ptr[n_users], dtype=np.int64)
    edge_snr = np.ones(ptr[n_users])
    for u in range(n_users):
        base = ptr[u]
        for r in range(degrees[u]):
            while True:
                s = int(rng.random() * m_s)
                clash = False
                for j in range(r):
                    if edge_slot[base + j] == s:
                        clash = True
                        break
                if not clash:
                    break
            edge_slot[base + r] = s
            if fading:
                edge_snr[base + r] = rng.exponential(mean_snr)
    return ptr, edge_slot, edge_snr


@numba.njit(cache=True)
def _decode(user_ptr, edge_slot, edge_snr, m_s, mode, threshold, max_iters):
    n_users = user_ptr.size - 1
    n_edges = edge_slot.size
    edge_user = np.empty(n_edges, dtype=np.int64)
    for u in range(n_users):
        for e in range(user_ptr[u], user_ptr[u + 1]):
            edge_user[e] = u
    slot_ptr = np.zeros(m_s + 1, dtype=np.int64)
    for e in range(n_edges):
        slot_ptr[edge_slot[e] + 1] += 1
    for s in range(m_s):
        slot_ptr[s + 1] += slot_ptr[s]
    fill = slot_ptr[:-1].copy()
    slot_edge = np.empty(n_edges, dtype=np.int64)
    for e in range(n_edges):
        s = edge_slot[e]
        slot_edge[fill[s]] = e
        fill[s] += 1

    decoded = np.zeros(n_users, dtype=np.bool_)
    if n_users == 0:
        return decoded

    if mode == _MODE_COLLISION_PLAIN:
        for s in range(m_s):
            if slot_ptr[s + 1] - slot_ptr[s] == 1:
                decoded[edge_user[slot_edge[slot_ptr[s]]]] = True
        return decoded

    if mode == _MODE_CAPTURE_PLAIN:
        for s in range(m_s):
            total = 0.0
            for k in range(slot_ptr[s], slot_ptr[s + 1]):
                total += edge_snr[slot_edge[k]]
            for k in range(slot_ptr[s], slot_ptr[s + 1]):
                b = edge_snr[slot_edge[k]]
                if b / (1.0 + total - b) >= threshold:
                    decoded[edge_user[slot_edge[k]]] = True
        return decoded

    remaining = n_users
    if mode == _MODE_COLLISION_SIC:
        count = np.empty(m_s, dtype=np.int64)
        for s in range(m_s):
            count[s] = slot_ptr[s + 1] - slot_ptr[s]
        for _ in range(max_iters):
            progress = False
            for s in range(m_s):
                if count[s] != 1:
                    continue
                u = -1
                for k in range(slot_ptr[s], slot_ptr[s + 1]):
                    if not decoded[edge_user[slot_edge[k]]]:
                        u = edge_user[slot_edge[k]]
                        break
                decoded[u] = True
                remaining -= 1
                progress = True
                for e in range(user_ptr[u], user_ptr[u + 1]):
                    count[edge_slot[e]] -= 1
            if not progress or remaining == 0:
                break
        return decoded

    # capture with intra- and inter-slot cancellation
    for _ in range(max_iters):
        progress = False
        for s in range(m_s):
            while True:
                total = 0.0
                best = -1
                best_snr = -1.0
                for k in range(slot_ptr[s], slot_ptr[s + 1]):
                    e = slot_edge[k]
                    if decoded[edge_user[e]]:
                        continue
                    total += edge_snr[e]
                    if edge_snr[e] > best_snr:
                        best_snr = edge_snr[e]
                        best = e
                if best < 0:
                    break
                if best_snr / (1.0 + (total - best_snr)) >= threshold:
                    decoded[edge_user[best]] = True
                    remaining -= 1
                    progress = True
                else:
                    break
        if not progress or remaining == 0:
            break
    return decoded


def _degree_arrays(dist: DegreeDistribution) -> tuple[np.ndarray, np.ndarray]:
    vals = dist.degrees.astype(np.int64)
    cdf = np.cumsum(dist.weights)
    cdf[-1] = 1.0
    return vals, cdf


def build_frame(n_users: int, m_s: int, dist: DegreeDistribution, channel: ChannelSpec,
                rng: np.random.Generator) -> FrameGraph:
    """Draw one frame: degrees from ``dist``, distinct uniform slots, i.i.d. Rayleigh SNRs."""
    if n_users < 0:
        raise ParameterError("n_users must be >= 0")
    if m_s < dist.d_max:
        raise ParameterError(f"m_s={m_s} is smaller than the largest degree {dist.d_max}")
    vals, cdf = _degree_arrays(dist)
    fading = channel.model is ChannelModel.RAYLEIGH_CAPTURE
    ptr, slots, snrs = _place(int(n_users), int(m_s), vals, cdf, fading, float(channel.mean_snr), rng)
    return FrameGraph(int(m_s), ptr, slots, snrs)


def _decoded_set(frame: FrameGraph, mode: int, threshold: float, max_iters: int) -> np.ndarray:
    if max_iters < 0:
        raise ParameterError("max_iters must be >= 0")
    flags = _decode(frame.user_ptr, frame.edge_slot, frame.edge_snr, frame.m_s, mode,
                    float(threshold), int(max_iters))
    return np.flatnonzero(flags)


def sic_collision(frame: FrameGraph, max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Iterative peeling on the collision channel; returns the sorted decoded user indices."""
    return _decoded_set(frame, _MODE_COLLISION_SIC, 1.0, max_iters)


def sic_capture(frame: FrameGraph, channel: ChannelSpec, max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Capture decoding with intra-slot and inter-slot cancellation.

    Within a slot the strongest remaining replica is decoded while its SINR
    ``B / (1 + sum of other residual SNRs)`` is at least ``b*``; each decoded
    user is removed from every slot at once.
    """
    if channel.model is not ChannelModel.RAYLEIGH_CAPTURE:
        raise ParameterError("sic_capture needs the Rayleigh capture channel")
    return _decoded_set(frame, _MODE_CAPTURE_SIC, channel.capture_threshold, max_iters)


def decode_frame(frame: FrameGraph, channel: ChannelSpec, sic: bool = True,
                 max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Decode with or without cancellation under the channel's model."""
    capture = channel.model is ChannelModel.RAYLEIGH_CAPTURE
    if capture:
        mode = _MODE_CAPTURE_SIC if sic else _MODE_CAPTURE_PLAIN
    else:
        if channel.model is not ChannelModel.COLLISION:
            raise ParameterError("slotted frames support the collision and Rayleigh capture channels")
        mode = _MODE_COLLISION_SIC if sic else _MODE_COLLISION_PLAIN
    return _decoded_set(frame, mode, channel.capture_threshold, max_iters)


@numba.njit(cache=True)
def _trial(n_users, m_s, deg_vals, deg_cdf, fading, mean_snr, mode, threshold, max_iters, rng):
    ptr, slots, snrs = _place(n_users, m_s, deg_vals, deg_cdf, fading, mean_snr, rng)
    flags = _decode(ptr, slots, snrs, m_s, mode, threshold, max_iters)
    return np.count_nonzero(flags)


def _scheme_distribution(scheme: Scheme, dist: DegreeDistribution | None) -> DegreeDistribution:
    if scheme is Scheme.SA:
        return DegreeDistribution.regular(1)
    if dist is None:
        if scheme is Scheme.IRSA:
            raise ParameterError("IRSA needs a degree distribution")
        return DegreeDistribution.regular(2)
    if scheme in (Scheme.DSA, Scheme.CRDSA) and len(dist.probs) != 1:
        raise ParameterError(f"{scheme.value} uses a fixed number of replicas; got {dist}")
    return dist


def simulate_slotted(scheme: Scheme | str, load: float, m_s: int, dist: DegreeDistribution | None,
                     channel: ChannelSpec, trials: int, seed: int,
                     max_iters: int = DEFAULT_MAX_ITERS, poisson_arrivals: bool = False) -> SimResult:
    """Average throughput and packet loss rate over ``trials`` independent frames.

    Each frame carries ``round(G m_s)`` users (or a Poisson number with that
    mean when ``poisson_arrivals``). SA and DSA decode without cancellation;
    CRDSA and IRSA run SIC for up to ``max_iters`` sweeps. Trial ``t`` uses
    the ``t``-th child of ``SeedSequence(seed)``, so results do not depend on
    how trials are scheduled.
    """
    scheme = Scheme(scheme)
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if load < 0:
        raise ParameterError("load must be >= 0")
    dist = _scheme_distribution(scheme, dist)
    if m_s < dist.d_max:
        raise ParameterError(f"m_s={m_s} is smaller than the largest degree {dist.d_max}")
    capture = channel.model is ChannelModel.RAYLEIGH_CAPTURE
    if not capture and channel.model is not ChannelModel.COLLISION:
        raise ParameterError("slotted simulation supports the collision and Rayleigh capture channels")
    sic = scheme in (Scheme.CRDSA, Scheme.IRSA)
    if capture:
        mode = _MODE_CAPTURE_SIC if sic else _MODE_CAPTURE_PLAIN
    else:
        mode = _MODE_COLLISION_SIC if sic else _MODE_COLLISION_PLAIN
    vals, cdf = _degree_arrays(dist)
    n_fixed = int(round(load * m_s))
    decoded = np.empty(trials)
    offered = np.empty(trials)
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        n = int(rng.poisson(load * m_s)) if poisson_arrivals else n_fixed
        offered[t] = n
        decoded[t] = _trial(n, int(m_s), vals, cdf, capture, float(channel.mean_snr), mode,
                            float(channel.capture_threshold), int(max_iters), rng)
    return _summarise(load, m_s, decoded, offered, channel.rate)


def _summarise(load: float, m_s: int, decoded: np.ndarray, offered: np.ndarray, rate: float) -> SimResult:
    trials = decoded.size
    per_frame_s = decoded / m_s
    throughput = float(per_frame_s.mean())
    users = int(offered.sum())
    plr = float(1.0 - decoded.sum() / users) if users else 0.0
    z = 1.959963984540054
    if trials > 1:
        s_hw = z * float(per_frame_s.std(ddof=1)) / math.sqrt(trials)
        lost = offered - decoded
        p_hw = z * float(lost.std(ddof=1)) / math.sqrt(trials) / float(offered.mean()) if users else 0.0
    else:
        s_hw = p_hw = float("nan")
    return SimResult(load=float(load), throughput=throughput, plr=min(max(plr, 0.0), 1.0), trials=trials,
                     users=users, half_width_95=p_hw, throughput_half_width=s_hw,
                     spectral_efficiency=throughput * rate)
