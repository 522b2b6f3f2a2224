"""Slotted ALOHA with several receivers (relays) over packet-erasure links.

Users access a slotted uplink with Poisson(G) traffic per slot. Each of the
``K`` relays sees every packet through an independent erasure channel with
probability ``eps`` and collects a packet when it is the only non-erased one
in the slot. The relays forward what they collect to a common gateway over a
downlink of ``R`` transmissions per uplink slot, either with a dropping
policy or with random linear coding (RLC) over GF(q).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import optimize, special, stats

from .channels import ParameterError


@dataclass(frozen=True)
class UplinkSpec:
    load: float
    erasure: float
    relays: int = 2

    def __post_init__(self) -> None:
        if self.load < 0:
            raise ParameterError("load must be >= 0")
        if not 0.0 <= self.erasure < 1.0:
            raise ParameterError("erasure probability must lie in [0, 1)")
        if self.relays < 1:
            raise ParameterError("at least one relay is needed")


def sa_erasure_throughput(load: float, erasure: float) -> float:
    """Single-receiver throughput ``T_sa = G (1 - eps) e^{-G (1 - eps)}``."""
    return load * (1.0 - erasure) * math.exp(-load * (1.0 - erasure))


def uplink_throughput(spec: UplinkSpec) -> float:
    """Distinct packets collected by at least one of ``K`` relays per slot.

    ``T_K = sum_{k=1}^{K} (-1)^(k-1) C(K, k) G (1-eps)^k e^{-G (1 - eps^k)}``
    by inclusion and exclusion over the relay subsets.
    """
    g, e, big_k = spec.load, spec.erasure, spec.relays
    k = np.arange(1, big_k + 1)
    terms = (-1.0) ** (k - 1) * special.comb(big_k, k) * g * (1.0 - e) ** k * np.exp(-g * (1.0 - e ** k))
    return float(terms.sum())


def incremental_gain(spec: UplinkSpec) -> float:
    """``T_K - T_{K-1}`` in closed form.

    ``sum_{k=1}^{K} (-1)^(k-1) C(K-1, k-1) G (1-eps)^k e^{-G (1 - eps^k)}``,
    which is the probability that relay ``K`` collects a packet no other relay
    collected.
    """
    g, e, big_k = spec.load, spec.erasure, spec.relays
    k = np.arange(1, big_k + 1)
    terms = (-1.0) ** (k - 1) * special.comb(big_k - 1, k - 1) * g * (1.0 - e) ** k * np.exp(-g * (1.0 - e ** k))
    return float(terms.sum())


def user_loss_prob(spec: UplinkSpec) -> float:
    """Probability that a packet is collected by none of the relays.

    ``zeta_K = sum_{k=0}^{K} (-1)^k C(K, k) (1-eps)^k e^{-G (1 - eps^k)}``.
    """
    g, e, big_k = spec.load, spec.erasure, spec.relays
    k = np.arange(0, big_k + 1)
    terms = (-1.0) ** k * special.comb(big_k, k) * (1.0 - e) ** k * np.exp(-g * (1.0 - e ** k))
    return float(terms.sum())


def peak_uplink_approx(erasure: float) -> float:
    """Two-relay peak estimate ``2/e - (1-eps) e^{-(1+eps)}`` (load ``1/(1-eps)``)."""
    return 2.0 / math.e - (1.0 - erasure) * math.exp(-1.0 - erasure)


def peak_uplink(erasure: float, relays: int = 2) -> tuple[float, float]:
    """Numerically maximised uplink throughput, returned as ``(T_max, G_star)``."""
    res = optimize.minimize_scalar(
        lambda g: -uplink_throughput(UplinkSpec(g, erasure, relays)),
        bounds=(1e-6, 20.0 / (1.0 - erasure)), method="bounded", options={"xatol": 1e-10},
    )
    return float(-res.fun), float(res.x)


@numba.njit(cache=True)
def _uplink_mc(load, erasure, relays, slots, rng):
    total = 0.0
    total_sq = 0.0
    for _ in range(slots):
        n = rng.poisson(load)
        got = np.full(relays, -1, dtype=np.int64)
        for k in range(relays):
            seen = 0
            who = -1
            for u in range(n):
                if rng.random() >= erasure:
                    seen += 1
                    who = u
            if seen == 1:
                got[k] = who
        distinct = 0
        for k in range(relays):
            if got[k] >= 0:
                dup = False
                for j in range(k):
                    if got[j] == got[k]:
                        dup = True
                if not dup:
                    distinct += 1
        total += distinct
        total_sq += distinct * distinct
    return total, total_sq


def uplink_monte_carlo(spec: UplinkSpec, slots: int, rng: np.random.Generator) -> tuple[float, float]:
    """Slot-level simulation of :func:`uplink_throughput`; returns ``(mean, std_error)``."""
    if slots < 2:
        raise ParameterError("need at least two slots")
    s, s2 = _uplink_mc(spec.load, spec.erasure, spec.relays, int(slots), rng)
    mean = s / slots
    var = max(s2 / slots - mean * mean, 0.0)
    return float(mean), float(math.sqrt(var / (slots - 1)))


def downlink_capacity(rate: float, uplink: float) -> float:
    """Downlink capacity ``min(R, T_ul)``: no strategy delivers more than is sent or collected."""
    if rate < 0:
        raise ParameterError("downlink rate must be >= 0")
    return min(rate, uplink)


# --------------------------------------------------------------------------
# Dropping policies (two relays)


class Policy(str, enum.Enum):
    COMMON_PROB = "common_prob"
    AGNOSTIC_OPT = "agnostic_opt"
    INTERFERENCE_AWARE_OPT = "interference_aware_opt"
    CHANNEL_AWARE_OPT = "channel_aware_opt"


def channel_aware_coefficients(load: float, erasure: float, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``(a_j, b_j)``, ``j = 1..Q+1``, of the channel-aware policy.

    ``a_j`` is the rate at which one relay collects packets from slots with
    ``j`` users (``j = Q+1`` pools all larger slots) and ``b_j`` the rate at
    which such a packet is collected by both relays.
    """
    if levels < 1:
        raise ParameterError("Q must be >= 1")
    g, e = load, erasure
    t_sa = sa_erasure_throughput(g, e)
    c_full = g * (1 - e) ** 2 * math.exp(-g * (1 - e * e))
    # a_j = T_sa Pois(j-1; G eps) and b_j = C Pois(j-1; G eps^2)
    i = np.arange(levels)
    a = t_sa * stats.poisson.pmf(i, g * e)
    b = c_full * stats.poisson.pmf(i, g * e * e)
    a_tail = t_sa * special.gammainc(levels, g * e) if e > 0 else 0.0
    b_tail = c_full * special.gammainc(levels, g * e * e) if e > 0 else 0.0
    return np.append(a, a_tail), np.append(b, b_tail)


def _greedy_second_relay(rate: float, t_sa: float, a: np.ndarray, b: np.ndarray) -> float:
    # Relay 1 forwards everything; relay 2 spends the remaining budget on the
    # classes with the lowest duplicate ratio b_j / a_j first.
    budget = rate - t_sa
    dup = 0.0
    for j in np.argsort(b / np.where(a > 0, a, np.inf), kind="stable"):
        if budget <= 0:
            break
        if a[j] <= 0:
            continue
        take = min(budget, a[j])
        dup += b[j] * take / a[j]
        budget -= take
    return rate - dup


def dropping_policy_throughput(policy: Policy | str, rate: float, load: float, erasure: float,
                               levels: int = 1) -> float:
    """Downlink throughput of the best dropping policy within a class.

    ``common_prob`` uses the same enqueue probability at both relays and is
    defined for ``0 <= R <= 2 T_sa``. The optimised classes are defined for
    ``T_sa <= R <= 2 T_sa``: ``agnostic_opt`` lets the two relays use
    different probabilities, ``interference_aware_opt`` conditions them on
    whether the slot was interfered, and ``channel_aware_opt`` on the exact
    slot multiplicity up to ``levels`` users.
    """
    policy = Policy(policy)
    g, e = load, erasure
    t_sa = sa_erasure_throughput(g, e)
    c_full = g * (1 - e) ** 2 * math.exp(-g * (1 - e * e))
    lo = 0.0 if policy is Policy.COMMON_PROB else t_sa
    hi = 2.0 * t_sa
    tol = 1e-12 * max(1.0, hi)
    if not lo - tol <= rate <= hi + tol:
        raise ParameterError(f"downlink rate {rate} outside the valid interval [{lo:.6g}, {hi:.6g}]")
    rate = min(max(rate, lo), hi)
    if policy is Policy.COMMON_PROB:
        return rate - rate * rate * c_full / (4.0 * t_sa * t_sa) if t_sa > 0 else 0.0
    if policy is Policy.AGNOSTIC_OPT:
        return rate * (1.0 - (1.0 - e) * math.exp(-g * e * (1.0 - e))) + c_full
    if policy is Policy.INTERFERENCE_AWARE_OPT:
        levels = 1
    a, b = channel_aware_coefficients(g, e, levels)
    return _greedy_second_relay(rate, t_sa, a, b)


def interference_aware_branches(rate: float, load: float, erasure: float) -> tuple[float, float]:
    """Both linear pieces of the interference-aware optimum evaluated at ``rate``.

    The first piece is optimal on ``[T_sa, a + 2b)``, the second on
    ``[a + 2b, 2 T_sa]``; they meet at ``a + 2b``.
    """
    g, e = load, erasure
    t_sa = sa_erasure_throughput(g, e)
    a_hat = g * (1 - e) * math.exp(-g)
    b_hat = a_hat * math.expm1(g * e)
    c_hat = g * (1 - e) ** 2 * math.exp(-g)
    d_hat = c_hat * math.expm1(g * e * e)
    first = rate * (1 - d_hat / b_hat) + d_hat * t_sa / b_hat
    second = rate * (1 - c_hat / a_hat) + c_hat * (t_sa + b_hat) / a_hat - d_hat
    return first, second


# --------------------------------------------------------------------------
# Random linear coding with finite relay buffers


@dataclass(frozen=True)
class RlcSpec:
    """Finite-buffer RLC setup.

    ``m_ul`` uplink slots are buffered; relay ``k`` then sends
    ``round(r_k * m_ul)`` random GF(q) combinations of what it collected.
    """

    m_ul: int
    q: int = 256
    r1: float = 0.5
    r2: float = 0.5

    def __post_init__(self) -> None:
        if self.m_ul < 1:
            raise ParameterError("m_ul must be >= 1")
        if not _is_prime_power(self.q):
            raise ParameterError(f"field order {self.q} is not a prime power >= 2")
        if self.r1 < 0 or self.r2 < 0:
            raise ParameterError("downlink rates must be >= 0")

    @property
    def rows(self) -> tuple[int, int]:
        return _round_half_up(self.r1 * self.m_ul), _round_half_up(self.r2 * self.m_ul)

    @classmethod
    def equal_split(cls, m_ul: int, total_rate: float, q: int = 256) -> "RlcSpec":
        return cls(m_ul=m_ul, q=q, r1=total_rate / 2.0, r2=total_rate / 2.0)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def _is_prime_power(q: int) -> bool:
    if q < 2:
        return False
    p = next(d for d in range(2, q + 1) if q % d == 0)
    while q % p == 0:
        q //= p
    return q == 1


@numba.njit(cache=True)
def _rank_table(n_max, c_max, q):
    # table[n, c, x] = P(rank = x) for a uniform n x c matrix over GF(q)
    x_max = min(n_max, c_max)
    table = np.zeros((n_max + 1, c_max + 1, x_max + 1))
    for c in range(c_max + 1):
        table[0, c, 0] = 1.0
        for n in range(1, n_max + 1):
            for x in range(0, min(n, c) + 1):
                stay = q ** float(x - c) * table[n - 1, c, x]
                grow = 0.0
                if x >= 1:
                    grow = (1.0 - q ** float(x - 1 - c)) * table[n - 1, c, x - 1]
                table[n, c, x] = stay + grow
    return table


def rank_pmf(rows: int, cols: int, q: int) -> np.ndarray:
    """Rank distribution of a uniformly random ``rows x cols`` matrix over GF(q).

    Built by adding rows one at a time: a new row raises the rank from ``x``
    with probability ``1 - q^(x - cols)``. The result has ``min(rows, cols) + 1``
    entries.
    """
    if rows < 0 or cols < 0:
        raise ParameterError("matrix dimensions must be >= 0")
    if q < 2:
        raise ParameterError("field order must be >= 2")
    return _rank_table(int(rows), int(cols), float(q))[rows, cols, : min(rows, cols) + 1].copy()


def _transition_probs(load: float, erasure: float) -> dict[str, float]:
    t_sa = sa_erasure_throughput(load, erasure)
    both = load * (1 - erasure) ** 2 * math.exp(-load * (1 - erasure * erasure))
    split = (load * erasure) ** 2 * (1 - erasure) ** 2 * math.exp(-load * (1 - erasure * erasure))
    probs = {
        "stay": 1.0 - 2.0 * t_sa + both + split,
        "c1": t_sa - both - split,
        "c2": t_sa - both - split,
        "c12": both,
        "c1c2": split,
    }
    if any(p < -1e-12 for p in probs.values()) or abs(sum(probs.values()) - 1.0) > 1e-12:
        raise ParameterError(f"invalid uplink transition probabilities for G={load}, eps={erasure}: {probs}")
    return {k: max(v, 0.0) for k, v in probs.items()}


def uplink_state_pmf(load: float, erasure: float, m_ul: int) -> np.ndarray:
    """Joint pmf of (relay-1-only, relay-2-only, both) packet counts after ``m_ul`` slots.

    Returned as an array ``P[c1, c2, c12]`` of shape ``(m_ul+1,)*3``. The
    chain starts at ``(0, 0, 0)`` and each slot adds nothing, one packet to a
    single relay, one shared packet, or one distinct packet to each relay.
    """
    if m_ul < 0:
        raise ParameterError("m_ul must be >= 0")
    tp = _transition_probs(load, erasure)
    n = m_ul + 1
    pmf = np.zeros((n, n, n))
    pmf[0, 0, 0] = 1.0
    for step in range(m_ul):
        hi = step + 1  # support after this step is within [0, hi]
        cur = pmf[:hi, :hi, :hi].copy()
        nxt = np.zeros((hi + 1,) * 3)
        nxt[:hi, :hi, :hi] += tp["stay"] * cur
        nxt[1:, :hi, :hi] += tp["c1"] * cur
        nxt[:hi, 1:, :hi] += tp["c2"] * cur
        nxt[:hi, :hi, 1:] += tp["c12"] * cur
        nxt[1:, 1:, :hi] += tp["c1c2"] * cur
        pmf[: hi + 1, : hi + 1, : hi + 1] = nxt
    return pmf


@numba.njit(cache=True)
def _unit_in_span(n, c, q):
    # probability that a fixed unit vector lies in a uniform n-dimensional
    # subspace of GF(q)^c: (q^n - 1) / (q^c - 1), written to avoid overflow
    if c == 0 or n == 0:
        return 0.0
    return q ** float(n - c) * (1.0 - q ** float(-n)) / (1.0 - q ** float(-c))


@numba.njit(cache=True)
def _rlc_expectation(pmf, ranks, r1, r2, q, mass_tol):
    n = pmf.shape[0]
    total = 0.0
    for c1 in range(n):
        for c2 in range(n):
            for c12 in range(n):
                w = pmf[c1, c2, c12]
                if w < mass_tol:
                    continue
                acc = 0.0
                for n1 in range(min(r1, c1) + 1):
                    p1 = ranks[r1, c1, n1]
                    if p1 < mass_tol:
                        continue
                    for n2 in range(min(r2, c2) + 1):
                        p2 = ranks[r2, c2, n2]
                        if p2 < mass_tol:
                            continue
                        rows3 = r1 + r2 - n1 - n2
                        for n3 in range(min(rows3, c12) + 1):
                            p3 = ranks[rows3, c12, n3]
                            if p3 < mass_tol:
                                continue
                            shared = q ** float(n3 - c12)
                            dec = (c1 * _unit_in_span(n1, c1, q) * shared
                                   + c2 * _unit_in_span(n2, c2, q) * shared
                                   + c12 * _unit_in_span(n3, c12, q))
                            acc += p1 * p2 * p3 * dec
                total += w * acc
    return total


EXACT_M_UL_CAP = 120


def rlc_finite_buffer_throughput(spec: RlcSpec, load: float, erasure: float,
                                 mass_tol: float = 1e-12) -> float:
    """Expected packets delivered per uplink slot by RLC with a finite buffer.

    Sums over the uplink state ``(c1, c2, c12)`` and the ranks of the three
    coefficient blocks. Eliminating each relay's private block leaves
    ``r1 + r2 - n1 - n2`` rows on the shared packets, of rank ``n3``. A shared
    packet is recovered when its unit vector lies in that row space. A
    relay-1-only packet needs its unit vector in the span of relay 1's private
    block and the induced (uniform) shared part in the residual span, which
    has probability ``(q^n1 - 1) / (q^c1 - 1) * q^-(c12 - n3)``. For large
    ``q`` this is close to ``q^-(h1 + h3)`` with ``h`` the rank deficits.
    States and ranks with mass below ``mass_tol`` are skipped.
    """
    if spec.m_ul > EXACT_M_UL_CAP:
        raise ParameterError(f"m_ul={spec.m_ul} exceeds the exact-model cap {EXACT_M_UL_CAP}; use the Monte-Carlo oracle")
    r1, r2 = spec.rows
    pmf = uplink_state_pmf(load, erasure, spec.m_ul)
    ranks = _rank_table(r1 + r2, spec.m_ul, float(spec.q))
    total = _rlc_expectation(pmf, ranks, r1, r2, float(spec.q), mass_tol)
    return float(total / spec.m_ul)


# GF(2^m) arithmetic through log / antilog tables
_PRIMITIVE_POLY = {2: 0b11, 4: 0b111, 8: 0b1011, 16: 0b10011, 256: 0x11D}


def gf_tables(q: int) -> tuple[np.ndarray, np.ndarray]:
    """``(exp, log)`` tables of GF(q) for ``q`` a supported power of two."""
    if q not in _PRIMITIVE_POLY:
        raise ParameterError(f"unsupported field GF({q}); supported: {sorted(_PRIMITIVE_POLY)}")
    poly = _PRIMITIVE_POLY[q]
    exp = np.zeros(2 * (q - 1), dtype=np.int64)
    log = np.zeros(q, dtype=np.int64)
    x = 1
    for i in range(q - 1):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & q:
            x ^= poly
    exp[q - 1:] = exp[: q - 1]
    return exp, log


@numba.njit(cache=True)
def _gf_mul(a, b, exp, log):
    if a == 0 or b == 0:
        return 0
    return exp[log[a] + log[b]]


@numba.njit(cache=True)
def _decoded_columns(mat, q, exp, log):
    """Gauss-Jordan elimination in place; returns the number of unit rows."""
    n_rows, n_cols = mat.shape
    pivot_row = 0
    pivots = np.full(n_rows, -1, dtype=np.int64)
    for col in range(n_cols):
        if pivot_row == n_rows:
            break
        sel = -1
        for r in range(pivot_row, n_rows):
            if mat[r, col] != 0:
                sel = r
                break
        if sel < 0:
            continue
        if sel != pivot_row:
            for j in range(n_cols):
                tmp = mat[sel, j]
                mat[sel, j] = mat[pivot_row, j]
                mat[pivot_row, j] = tmp
        inv = exp[(q - 1) - log[mat[pivot_row, col]]]
        for j in range(n_cols):
            mat[pivot_row, j] = _gf_mul(mat[pivot_row, j], inv, exp, log)
        for r in range(n_rows):
            f = mat[r, col]
            if r != pivot_row and f != 0:
                for j in range(n_cols):
                    mat[r, j] ^= _gf_mul(f, mat[pivot_row, j], exp, log)
        pivots[pivot_row] = col
        pivot_row += 1
    decoded = 0
    for r in range(pivot_row):
        nz = 0
        for j in range(n_cols):
            if mat[r, j] != 0:
                nz += 1
        if nz == 1:
            decoded += 1
    return decoded


@numba.njit(cache=True)
def _rlc_mc(load, erasure, m_ul, r1, r2, q, exp, log, trials, rng):
    out = np.empty(trials)
    for t in range(trials):
        c1 = 0
        c2 = 0
        c12 = 0
        for _ in range(m_ul):
            n = rng.poisson(load)
            who1 = -1
            who2 = -1
            seen1 = 0
            seen2 = 0
            for u in range(n):
                if rng.random() >= erasure:
                    seen1 += 1
                    who1 = u
                if rng.random() >= erasure:
                    seen2 += 1
                    who2 = u
            got1 = seen1 == 1
            got2 = seen2 == 1
            if got1 and got2 and who1 == who2:
                c12 += 1
            else:
                if got1:
                    c1 += 1
                if got2:
                    c2 += 1
        n_cols = c1 + c2 + c12
        if n_cols == 0 or r1 + r2 == 0:
            out[t] = 0.0
            continue
        mat = np.zeros((r1 + r2, n_cols), dtype=np.int64)
        for r in range(r1):
            for j in range(c1):
                mat[r, j] = int(rng.random() * q)
            for j in range(c12):
                mat[r, c1 + c2 + j] = int(rng.random() * q)
        for r in range(r2):
            for j in range(c2):
                mat[r1 + r, c1 + j] = int(rng.random() * q)
            for j in range(c12):
                mat[r1 + r, c1 + c2 + j] = int(rng.random() * q)
        out[t] = _decoded_columns(mat, q, exp, log)
    return out


def rlc_monte_carlo_oracle(spec: RlcSpec, load: float, erasure: float, trials: int,
                           seed: int | np.random.SeedSequence) -> tuple[float, float]:
    """Simulated RLC throughput per uplink slot as ``(mean, std_error)``.

    The uplink is simulated slot by slot from Poisson arrivals and independent
    erasures. Relays send uniformly random GF(q) combinations and the gateway
    runs Gauss-Jordan elimination, counting columns recovered as unit rows.
    """
    if trials < 2:
        raise ParameterError("need at least two trials")
    exp, log = gf_tables(spec.q)
    r1, r2 = spec.rows
    rng = np.random.default_rng(seed)
    counts = _rlc_mc(float(load), float(erasure), spec.m_ul, r1, r2, spec.q, exp, log, int(trials), rng)
    per_slot = counts / spec.m_ul
    return float(per_slot.mean()), float(per_slot.std(ddof=1) / math.sqrt(trials))


def rlc_throughput_curve(m_ul: int, load: float, erasure: float, q: int = 256,
                         rate_range: tuple[float, float] = (0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Analytic RLC throughput for every total row count ``n`` with ``n / m_ul`` in ``rate_range``.

    The ``n`` rows are split as evenly as possible between the relays
    (relay 1 takes the odd one). Returns ``(rates, throughputs)``.
    """
    lo = math.ceil(rate_range[0] * m_ul - 1e-9)
    hi = math.floor(rate_range[1] * m_ul + 1e-9)
    rates, values = [], []
    for n in range(lo, hi + 1):
        spec = RlcSpec(m_ul=m_ul, q=q, r1=math.ceil(n / 2) / m_ul, r2=(n // 2) / m_ul)
        rates.append(n / m_ul)
        values.append(rlc_finite_buffer_throughput(spec, load, erasure))
    return np.array(rates), np.array(values)


def rlc_knee(m_ul: int, load: float, erasure: float, q: int = 256,
             rate_range: tuple[float, float] = (0.3, 0.8)) -> float:
    """Downlink rate at the centre of the steepest step of the RLC throughput curve."""
    rates, values = rlc_throughput_curve(m_ul, load, erasure, q, rate_range)
    if rates.size < 2:
        raise ParameterError("rate_range holds fewer than two row counts")
    k = int(np.argmax(np.diff(values) / np.diff(rates)))
    return float(0.5 * (rates[k] + rates[k + 1]))
