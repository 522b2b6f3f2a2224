from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ra_lab.channels import ParameterError
from ra_lab.legacy import (
    mpr_slot_throughput,
    sicta_expected_length,
    sicta_lengths,
    sicta_resolve,
    sicta_throughput,
    ti_construct,
    ti_throughput,
)
from oracles import bernoulli_mpr_throughput


def test_sicta_binary_throughput_is_ln2():
    assert sicta_throughput(2) == pytest.approx(math.log(2), rel=1e-15)
    assert sicta_throughput(3) == pytest.approx(math.log(3) / 2)
    with pytest.raises(ParameterError):
        sicta_throughput(1)


def test_cri_dynamic_program_approaches_ln2():
    ell = sicta_expected_length(400)
    assert ell[0] == ell[1] == 1.0
    assert ell[2] == pytest.approx(3.0)
    assert 400 / ell[400] == pytest.approx(math.log(2), abs=1e-5)


@pytest.mark.parametrize("m", range(0, 9))
def test_simulated_cri_matches_dynamic_program(m):
    rng = np.random.default_rng(50 + m)
    x = sicta_lengths(m, 0.5, 40_000, rng)
    expected = sicta_expected_length(8)[m]
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - expected) <= 4 * se + 1e-12


def test_biased_split_matches_dynamic_program():
    rng = np.random.default_rng(8)
    x = sicta_lengths(6, 0.3, 40_000, rng)
    assert abs(x.mean() - sicta_expected_length(6, 0.3)[6]) < 4 * x.std(ddof=1) / 200


def test_sicta_resolve_small_cases():
    rng = np.random.default_rng(0)
    assert sicta_resolve(0, 0.5, rng) == 1
    assert sicta_resolve(1, 0.5, rng) == 1
    with pytest.raises(ParameterError):
        sicta_resolve(3, 1.0, rng)
    with pytest.raises(ParameterError):
        sicta_lengths(3, 0.5, 0, rng)


def test_ti_construction_for_three_halves():
    seqs = ti_construct([Fraction(1, 2)] * 3)
    assert [s.tolist() for s in seqs] == [
        [1, 0, 1, 0, 1, 0, 1, 0],
        [1, 0, 0, 1, 1, 0, 0, 1],
        [1, 0, 1, 0, 0, 1, 0, 1],
    ]


def test_ti_closed_form_example():
    # three users at duty 1/2 on the 2-MPR channel
    assert ti_throughput(3, 0.5, 2) == pytest.approx(1.125)


duty_lists = st.lists(
    st.tuples(st.integers(1, 3), st.integers(2, 4)).filter(lambda t: t[0] <= t[1]).map(lambda t: Fraction(*t)),
    min_size=2, max_size=3,
)


@given(duty_lists, st.integers(1, 3))
def test_ti_throughput_invariant_over_all_shifts(duties, iota):
    seqs = ti_construct(duties)
    period = seqs[0].size
    expected = bernoulli_mpr_throughput(duties, iota)
    for shifts in itertools.product(range(period), repeat=len(seqs) - 1):
        assert mpr_slot_throughput(seqs, (0, *shifts), iota) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n, iota", [(3, 2), (4, 2), (4, 3), (3, 3)])
def test_symmetric_closed_form_matches_exhaustive_shifts(n, iota):
    seqs = ti_construct([Fraction(1, 2)] * n)
    period = seqs[0].size
    values = {round(mpr_slot_throughput(seqs, (0, *s), iota), 12)
              for s in itertools.product(range(period), repeat=n - 1)}
    assert values == {round(ti_throughput(n, 0.5, iota), 12)}


def test_ti_periods_and_duty():
    seqs = ti_construct([Fraction(1, 3), Fraction(2, 5)])
    assert all(s.size == 15 for s in seqs)
    assert seqs[0].mean() == pytest.approx(1 / 3) and seqs[1].mean() == pytest.approx(2 / 5)


def test_ti_validation():
    with pytest.raises(ParameterError):
        ti_construct([0])
    with pytest.raises(ParameterError):
        ti_throughput(3, 0.5, 1)
    with pytest.raises(ParameterError):
        ti_throughput(0, 0.5, 2)
    assert ti_construct([]) == []
