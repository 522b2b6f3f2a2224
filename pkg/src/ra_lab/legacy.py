"""Tree splitting with interference cancellation (SICTA) and feedback-free TI sequences.

SICTA is simulated literally through the two per-user counters of the
algorithm under gated access, binary splitting and instantaneous multiplicity
feedback. A dynamic-programming evaluation of the expected collision
resolution interval (CRI) length serves as the analytic companion.

Throughput-invariant (TI) protocol sequences are built from per-user binary
matrices and their throughput under the ``iota``-MPR channel is available in
closed form.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np
from scipy import special

from .channels import ParameterError

@numba.njit(cache=True)
def _sicta_run(m, p, rng):
    if m == 0:
        return 1
    # local counter per user; -1 marks a decoded user
    c = np.zeros(m, dtype=np.int64)
    system = 0
    slots = 0
    while True:
        slots += 1
        n_tx = 0
        for u in range(m):
            if c[u] == 0:
                n_tx += 1
        if n_tx >= 2:
            # feedback e: transmitters split, everybody else moves one level down
            for u in range(m):
                if c[u] > 0:
                    c[u] += 1
                elif c[u] == 0:
                    c[u] = 0 if rng.random() < p else 1
            system += 1
        elif n_tx == 0:
            # feedback 0: the level below is a known collision, it re-splits
            for u in range(m):
                if c[u] == 1:
                    c[u] = 0 if rng.random() < p else 1
            if system == 0:
                return slots
        else:
            # one packet decoded; SIC then clears every pending level that
            # holds at most one unknown packet
            k = 1
            level = 1
            while level <= system:
                count = 0
                for u in range(m):
                    if c[u] == level:
                        count += 1
                if count >= 2:
                    break
                k += 1
                level += 1
            for u in range(m):
                if c[u] >= 0:
                    c[u] -= k - 1
                    if c[u] <= 0:
                        c[u] = -1
                    elif c[u] == 1:
                        c[u] = 0 if rng.random() < p else 1
            system -= k - 1
            if system == 0:
                return slots


def _check_sicta(m: int, p: float) -> None:
    if m < 0:
        raise ParameterError("collision size must be >= 0")
    if not 0.0 < p < 1.0:
        raise ParameterError("split probability must lie in (0, 1)")


def sicta_resolve(m: int, p: float, rng: np.random.Generator) -> int:
    """Simulate one SICTA collision resolution interval and return its length in slots.

    All ``m`` users transmit in the first slot (gated access). After a
    collision each transmitter stays in the transmitting group with
    probability ``p`` and moves one level down otherwise. Decoding one packet
    lets SIC clear every stacked level holding at most one unknown packet;
    the number of cleared levels is fed back and both counters move by it.
    The CRI ends when the system counter returns to zero.
    """
    _check_sicta(m, p)
    return int(_sicta_run(int(m), float(p), rng))


@numba.njit(cache=True)
def _sicta_batch(m, p, runs, rng):
    out = np.empty(runs, dtype=np.int64)
    for r in range(runs):
        out[r] = _sicta_run(m, p, rng)
    return out


def sicta_lengths(m: int, p: float, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Vector of ``runs`` independent CRI lengths for collision size ``m``."""
    if runs < 1:
        raise ParameterError("runs must be >= 1")
    _check_sicta(m, p)
    return _sicta_batch(int(m), float(p), int(runs), rng)


def sicta_expected_length(m_max: int, p: float = 0.5) -> np.ndarray:
    """Expected CRI lengths ``E[l_m]`` for ``m = 0..m_max``.

    Solves the recursion ``l_m = l_i + l_{m-i}`` (``i`` users on the first
    branch, binomial with parameter ``p``) with ``l_0 = l_1 = 1``. The terms
    ``i = 0`` and ``i = m`` contain ``l_m`` itself and are moved to the left.
    """
    if not 0.0 < p < 1.0:
        raise ParameterError("split probability must lie in (0, 1)")
    ell = np.ones(max(m_max, 1) + 1)
    for m in range(2, m_max + 1):
        i = np.arange(m + 1)
        w = special.comb(m, i) * p ** i * (1.0 - p) ** (m - i)
        inner = np.sum(w[1:m] * (ell[1:m] + ell[m - 1:0:-1]))
        edge = w[0] + w[m]
        ell[m] = (inner + edge * ell[0]) / (1.0 - edge)
    return ell[: m_max + 1]


def sicta_throughput(j: int) -> float:
    """Maximum stable throughput ``ln j / (j - 1)`` of ``j``-ary SICTA."""
    if j < 2:
        raise ParameterError("split arity must be >= 2")
    return math.log(j) / (j - 1)


# --------------------------------------------------------------------------
# TI protocol sequences


def _as_fraction(x) -> Fraction:
    f = Fraction(x).limit_denominator(10_000) if isinstance(x, float) else Fraction(x)
    if not 0 < f <= 1:
        raise ParameterError(f"duty factor {x} outside (0, 1]")
    return f


def ti_construct(duty_factors: Sequence) -> list[np.ndarray]:
    """Minimum-period TI sequences for the given duty factors ``u_i / v_i``.

    User ``i`` gets a ``(prod_{k<i} v_k) x v_i`` binary matrix whose row
    ``r`` has its ``u_i`` ones in the cyclic positions ``r, r+1, ..`` modulo
    ``v_i``. Reading the matrix column by column and repeating the result up
    to the common period ``prod_k v_k`` gives the sequence.

    Fractions are not reduced across users: pass ``Fraction(2, 4)`` to get a
    period factor 4. Floats are converted with :class:`fractions.Fraction`.
    """
    fracs = [_as_fraction(x) for x in duty_factors]
    if not fracs:
        return []
    vs = [f.denominator for f in fracs]
    us = [f.numerator for f in fracs]
    period = math.prod(vs)
    seqs = []
    rows = 1
    for u, v in zip(us, vs):
        mat = np.zeros((rows, v), dtype=np.int8)
        for r in range(rows):
            mat[r, (r + np.arange(u)) % v] = 1
        block = mat.T.reshape(-1)  # columns v_1, v_2, ... concatenated
        seqs.append(np.tile(block, period // block.size))
        rows *= v
    return seqs


def ti_throughput(n_users: int, duty: float, iota: int) -> float:
    """Throughput of symmetric TI sequences on the ``iota``-MPR channel.

    A slot is successful for each of its users when at most ``iota`` of them
    are active, so the throughput is
    ``n_u sum_{k=0}^{iota-1} C(n_u-1, k) d_f^(k+1) (1 - d_f)^(n_u-1-k)``.
    The load is ``G = n_u d_f``.
    """
    if iota < 2:
        raise ParameterError("iota must be >= 2")
    if not 0.0 < duty <= 1.0:
        raise ParameterError("duty factor must lie in (0, 1]")
    if n_users < 1:
        raise ParameterError("n_users must be >= 1")
    k = np.arange(0, min(iota - 1, n_users - 1) + 1)
    terms = special.comb(n_users - 1, k) * duty ** (k + 1) * (1.0 - duty) ** (n_users - 1 - k)
    return float(n_users * terms.sum())


def mpr_slot_throughput(sequences: Sequence[np.ndarray], shifts: Sequence[int], iota: int) -> float:
    """Average per-slot successes of shifted sequences over one common period.

    User ``i`` transmits in slot ``t`` iff ``b_i[(t - tau_i) mod L] = 1``; a
    slot with ``n <= iota`` active users delivers ``n`` packets.
    """
    period = len(sequences[0])
    active = np.zeros(period, dtype=np.int64)
    for seq, tau in zip(sequences, shifts):
        active += np.roll(np.asarray(seq, dtype=np.int64), tau)
    return float(np.where(active <= iota, active, 0).sum() / period)
