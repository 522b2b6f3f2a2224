"""Independent reference implementations shared by the unit and acceptance tests.

Each oracle is written the slow, obvious way and shares no code with the
package beyond the small helpers it explicitly imports.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from ra_lab.asynchronous import VirtualFrameConfig, WindowState, place_user


def plr_term_by_term(load, degree, frame_packets, t_v):
    """Series summed with plain floats, one Poisson term at a time, until the terms vanish."""
    n_v = math.floor(frame_packets / t_v)
    lam = frame_packets * load
    denom = degree * math.comb(n_v, degree)
    total = 0.0
    log_pmf = -lam + math.log(lam)  # log Pois(m = 1)
    m = 1
    while True:
        m += 1
        log_pmf += math.log(lam) - math.log(m)
        term = math.exp(log_pmf) * (m * (m - 1) / 2) / denom * 2.0 / m
        total += term
        if m > lam and term < 1e-300:
            return total


def closure_oracle(state, channel, mode):
    """Decode until nothing changes; SIC and combining only ever help, so the fixed point is unique."""
    n_users, d = state.starts.shape
    alive = np.ones(n_users, dtype=bool)
    p, noise, n_s = channel.signal_power, channel.noise_power, state.n_s

    def counts_on(s0):
        cov = np.zeros(state.length, dtype=int)
        for u in np.flatnonzero(alive):
            for s in state.starts[u]:
                cov[s:s + n_s] += 1
        return cov[s0:s0 + n_s] - 1

    def ok(gamma):
        return np.mean(np.log2(1.0 + gamma)) >= channel.rate * (1 - 1e-12)

    changed = True
    while changed:
        changed = False
        for u in np.flatnonzero(alive):
            profiles = [counts_on(s) for s in state.starts[u]]
            gammas = [p / (noise + m * p) for m in profiles]
            good = any(ok(g) for g in gammas)
            if not good and mode == "sc":
                good = ok(np.max(gammas, axis=0))
            if not good and mode == "mrc":
                good = ok(np.sum(gammas, axis=0))
            if good:
                alive[u] = False
                changed = True
    return np.flatnonzero(~alive)


def random_window(rng, n_users, n_s=10, frame=8, length_packets=30, degree=2):
    vf = VirtualFrameConfig(n_p=frame, n_s=n_s, degree=degree, window=frame, shift=1)
    length = length_packets * n_s
    starts = []
    for _ in range(n_users):
        arrival = int(rng.integers(0, length - frame * n_s))
        starts.append(place_user(vf, arrival, rng))
    return WindowState.from_placements(n_s, length, starts)


def mc_capture_prob(r, mean_snr, b_star, trials, rng):
    """Decode the strongest burst while its SINR clears b*, then cancel it; report the share decoded."""
    snr = -np.sort(-rng.exponential(mean_snr, size=(trials, r)), axis=1)
    tail = np.cumsum(snr[:, ::-1], axis=1)[:, ::-1]  # tail[:, t] = sum of snr[:, t:]
    rest = np.concatenate([tail[:, 1:], np.zeros((trials, 1))], axis=1)
    ok = snr / (1.0 + rest) >= b_star
    decoded = np.cumprod(ok, axis=1).sum(axis=1)
    return decoded.mean() / r


def bernoulli_mpr_throughput(duties, iota):
    """E[n 1{n <= iota}] for independent users active with the given probabilities."""
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=len(duties)):
        n = sum(pattern)
        if n <= iota:
            prob = math.prod(float(d) if a else 1.0 - float(d) for a, d in zip(pattern, duties))
            total += n * prob
    return total


def rank_mod_p(rows, p):
    """Rank over the prime field GF(p) by plain Gaussian elimination."""
    m = [list(r) for r in rows]
    rank, n_cols = 0, len(m[0]) if m else 0
    for col in range(n_cols):
        pivot = next((i for i in range(rank, len(m)) if m[i][col] % p), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv = pow(m[rank][col], p - 2, p)
        m[rank] = [(x * inv) % p for x in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][col] % p:
                f = m[i][col]
                m[i] = [(a - f * b) % p for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def brute_rank_pmf(n, c, q):
    counts = np.zeros(min(n, c) + 1)
    for entries in itertools.product(range(q), repeat=n * c):
        rows = [entries[i * c:(i + 1) * c] for i in range(n)]
        counts[rank_mod_p(rows, q)] += 1
    return counts / q ** (n * c)


def gaussian_rank_pmf(n, c, q):
    """Exact count of n x c matrices of each rank over GF(q)."""
    out = []
    for r in range(min(n, c) + 1):
        num = Fraction(1)
        for i in range(r):
            num *= Fraction((q ** n - q ** i) * (q ** c - q ** i), q ** r - q ** i)
        out.append(float(num / q ** (n * c)))
    return np.array(out)


def carryless_mul(a, b, poly, q):
    bits = q.bit_length() - 1
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> bits:
            a ^= poly
    return out


def peel_oracle(m_s, placements):
    """Textbook peeling: repeatedly decode any slot holding exactly one unresolved user."""
    alive = set(range(len(placements)))
    decoded = set()
    progress = True
    while progress:
        progress = False
        for s in range(m_s):
            users = [u for u in alive if s in placements[u]]
            if len(users) == 1:
                decoded.add(users[0])
                alive.discard(users[0])
                progress = True
    return sorted(decoded)


def capture_oracle(m_s, placements, snrs, b_star):
    """Intra-slot capture with cancellation across slots, written without shortcuts."""
    alive = set(range(len(placements)))
    snr_of = {(u, s): snrs[u][k] for u in range(len(placements)) for k, s in enumerate(placements[u])}
    progress = True
    while progress:
        progress = False
        for s in range(m_s):
            while True:
                users = [u for u in alive if s in placements[u]]
                if not users:
                    break
                best = max(users, key=lambda u: snr_of[(u, s)])
                rest = sum(snr_of[(u, s)] for u in users if u != best)
                if snr_of[(best, s)] / (1.0 + rest) >= b_star:
                    alive.discard(best)
                    progress = True
                else:
                    break
    return sorted(set(range(len(placements))) - alive)
