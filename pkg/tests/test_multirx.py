from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ra_lab.channels import ParameterError
from ra_lab.multirx import (
    Policy,
    RlcSpec,
    downlink_capacity,
    dropping_policy_throughput,
    gf_tables,
    incremental_gain,
    interference_aware_branches,
    peak_uplink,
    peak_uplink_approx,
    rank_pmf,
    rlc_finite_buffer_throughput,
    rlc_monte_carlo_oracle,
    rlc_throughput_curve,
    sa_erasure_throughput,
    uplink_monte_carlo,
    uplink_state_pmf,
    uplink_throughput,
    UplinkSpec,
    user_loss_prob,
)
from oracles import brute_rank_pmf, carryless_mul, gaussian_rank_pmf


# ---------------------------------------------------------------- uplink


def test_single_relay_is_erasure_slotted_aloha():
    for g, e in [(0.5, 0.1), (1.3, 0.4)]:
        assert uplink_throughput(UplinkSpec(g, e, 1)) == pytest.approx(sa_erasure_throughput(g, e))


@given(st.floats(0.0, 5.0), st.floats(0.0, 0.95), st.integers(1, 6))
def test_uplink_identities(g, e, k):
    spec = UplinkSpec(g, e, k)
    t = uplink_throughput(spec)
    assert t == pytest.approx(g * (1.0 - user_loss_prob(spec)), abs=1e-12)
    if k > 1:
        prev = uplink_throughput(UplinkSpec(g, e, k - 1))
        assert incremental_gain(spec) == pytest.approx(t - prev, abs=1e-12)
        assert t >= prev - 1e-12


@pytest.mark.parametrize("g, e", [(0.5, 0.1), (1.0, 0.3), (1.6, 0.5), (2.5, 0.7)])
def test_uplink_monte_carlo_within_three_sigma(g, e):
    spec = UplinkSpec(g, e, 2)
    mean, se = uplink_monte_carlo(spec, 400_000, np.random.default_rng(7))
    assert abs(mean - uplink_throughput(spec)) < 3 * se


@given(st.floats(0.01, 4.0), st.floats(0.0, 0.95))
def test_two_relay_throughput_by_conditioning_on_population(g, e):
    # with n users each relay sees exactly one with prob n(1-e)e^(n-1); both see the same one
    # with prob n(1-e)^2 e^(2n-2)
    n = np.arange(0, 200)
    pois = stats.poisson.pmf(n, g)
    per_n = 2 * n * (1 - e) * e ** np.maximum(n - 1, 0) - n * (1 - e) ** 2 * e ** np.maximum(2 * n - 2, 0)
    assert uplink_throughput(UplinkSpec(g, e, 2)) == pytest.approx(float(pois @ per_n), abs=1e-12)


@pytest.mark.parametrize("e", np.linspace(0.0, 0.9, 10))
def test_peak_approximation_error(e):
    t_max, _ = peak_uplink(float(e))
    assert abs(t_max - peak_uplink_approx(float(e))) / t_max <= 0.006


def test_downlink_capacity():
    assert downlink_capacity(0.3, 0.5) == 0.3
    assert downlink_capacity(0.9, 0.5) == 0.5
    with pytest.raises(ParameterError):
        downlink_capacity(-0.1, 0.5)


def test_uplink_spec_validation():
    with pytest.raises(ParameterError):
        UplinkSpec(1.0, 1.0)
    with pytest.raises(ParameterError):
        UplinkSpec(-1.0, 0.1)
    with pytest.raises(ParameterError):
        UplinkSpec(1.0, 0.1, 0)


# ---------------------------------------------------------------- dropping policies

G, EPS = 1 / 0.7, 0.3
T_SA = sa_erasure_throughput(G, EPS)


@given(st.floats(0.0, 1.0))
def test_policy_ordering(frac):
    rate = T_SA * (1.0 + frac)
    t_ul = uplink_throughput(UplinkSpec(G, EPS, 2))
    values = [dropping_policy_throughput(p, rate, G, EPS) for p in
              (Policy.COMMON_PROB, Policy.AGNOSTIC_OPT, Policy.INTERFERENCE_AWARE_OPT)]
    values.append(downlink_capacity(rate, t_ul))
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


@given(st.floats(0.0, 1.0))
def test_interference_aware_is_lower_branch(frac):
    rate = T_SA * (1.0 + frac)
    assert dropping_policy_throughput("interference_aware_opt", rate, G, EPS) == pytest.approx(
        min(interference_aware_branches(rate, G, EPS)), abs=1e-12)


@given(st.floats(0.0, 1.0))
def test_channel_aware_improves_with_levels(frac):
    rate = T_SA * (1.0 + frac)
    vals = [dropping_policy_throughput("channel_aware_opt", rate, G, EPS, levels=q) for q in (1, 2, 4, 8)]
    assert vals[0] == pytest.approx(dropping_policy_throughput("interference_aware_opt", rate, G, EPS))
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_policy_end_points():
    # at R = T_sa the optimised relay 2 forwards nothing, so nothing is duplicated
    for p in (Policy.AGNOSTIC_OPT, Policy.INTERFERENCE_AWARE_OPT, Policy.CHANNEL_AWARE_OPT):
        assert dropping_policy_throughput(p, T_SA, G, EPS) == pytest.approx(T_SA)
    # at R = 2 T_sa both relays forward everything and the duplicates are lost
    t_ul = uplink_throughput(UplinkSpec(G, EPS, 2))
    for p in Policy:
        assert dropping_policy_throughput(p, 2 * T_SA, G, EPS) == pytest.approx(t_ul)


def test_policy_domains():
    assert dropping_policy_throughput("common_prob", 0.1, G, EPS) == pytest.approx(0.1 - 0.01 * (
        G * (1 - EPS) ** 2 * math.exp(-G * (1 - EPS ** 2))) / (4 * T_SA ** 2))
    with pytest.raises(ParameterError):
        dropping_policy_throughput("agnostic_opt", 0.1, G, EPS)
    with pytest.raises(ParameterError):
        dropping_policy_throughput("common_prob", 2.01 * T_SA, G, EPS)


# ---------------------------------------------------------------- RLC


def test_rank_example_three_by_three_binary():
    assert rank_pmf(3, 3, 2)[3] == pytest.approx(168 / 512, rel=1e-14)


@pytest.mark.parametrize("q", [2, 3])
@pytest.mark.parametrize("n, c", [(n, c) for n in range(1, 5) for c in range(1, 5)])
def test_rank_pmf_against_enumeration(n, c, q):
    if q ** (n * c) > 70_000:
        oracle = gaussian_rank_pmf(n, c, q)
    else:
        oracle = brute_rank_pmf(n, c, q)
    np.testing.assert_allclose(rank_pmf(n, c, q), oracle, atol=1e-14)


@pytest.mark.parametrize("n, c", [(3, 3), (2, 4), (4, 2)])
def test_gaussian_count_agrees_with_enumeration_over_gf3(n, c):
    np.testing.assert_allclose(gaussian_rank_pmf(n, c, 3), brute_rank_pmf(n, c, 3), atol=1e-14)


def test_rank_pmf_degenerate_shapes():
    np.testing.assert_array_equal(rank_pmf(0, 5, 256), [1.0])
    np.testing.assert_array_equal(rank_pmf(4, 0, 256), [1.0])


@pytest.mark.parametrize("q", [4, 16, 256])
def test_gf_tables_match_carryless_product(q):
    from ra_lab.multirx import _PRIMITIVE_POLY
    exp, log = gf_tables(q)
    rng = np.random.default_rng(q)
    for a, b in rng.integers(1, q, size=(200, 2)):
        via_tables = exp[(log[a] + log[b]) % (q - 1)]
        assert via_tables == carryless_mul(int(a), int(b), _PRIMITIVE_POLY[q], q)
    assert sorted(exp[: q - 1].tolist()) == list(range(1, q))


def test_state_chain_marginals():
    m = 12
    pmf = uplink_state_pmf(G, EPS, m)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    both = G * (1 - EPS) ** 2 * math.exp(-G * (1 - EPS ** 2))
    c12 = pmf.sum(axis=(0, 1))
    expected = [math.comb(m, k) * both ** k * (1 - both) ** (m - k) for k in range(m + 1)]
    np.testing.assert_allclose(c12, expected, atol=1e-12)
    # relay 1 holds c1 + c12 packets, one per slot in which it saw a lone user
    c = np.arange(m + 1)
    assert (pmf.sum(axis=(1, 2)) @ c + c12 @ c) / m == pytest.approx(T_SA, rel=1e-10)


def test_rlc_zero_rows_and_full_rows():
    assert rlc_finite_buffer_throughput(RlcSpec(10, 256, 0.0, 0.0), G, EPS) == 0.0
    # with as many rows as slots a large field recovers almost everything collected
    t_ul = uplink_throughput(UplinkSpec(G, EPS, 2))
    full = rlc_finite_buffer_throughput(RlcSpec(10, 256, 1.0, 1.0), G, EPS)
    assert full == pytest.approx(t_ul, rel=0.02)
    assert full <= t_ul + 1e-12


def test_rlc_tiny_binary_instance():
    spec = RlcSpec(3, 2, 1 / 3, 1 / 3)
    assert spec.rows == (1, 1)
    mean, se = rlc_monte_carlo_oracle(spec, G, EPS, 1_000_000, seed=3)
    assert abs(mean - rlc_finite_buffer_throughput(spec, G, EPS)) < 3 * se


@pytest.mark.parametrize("m_ul, r1, r2, q", [(6, 0.5, 0.5, 4), (8, 0.25, 0.375, 2), (10, 0.3, 0.3, 256)])
def test_rlc_analytic_matches_gf_simulation(m_ul, r1, r2, q):
    spec = RlcSpec(m_ul, q, r1, r2)
    mean, se = rlc_monte_carlo_oracle(spec, G, EPS, 20_000, seed=m_ul)
    assert abs(mean - rlc_finite_buffer_throughput(spec, G, EPS)) < 3.5 * se


def test_rlc_curve_is_monotone():
    rates, values = rlc_throughput_curve(20, G, EPS, 256, (0.2, 1.0))
    assert rates[0] == pytest.approx(0.2) and rates[-1] == pytest.approx(1.0)
    assert np.all(np.diff(values) >= -1e-12)


def test_rlc_spec_rules():
    assert RlcSpec(25, 256, 0.3, 0.3).rows == (8, 8)  # 7.5 rounds up
    assert RlcSpec.equal_split(20, 0.5).rows == (5, 5)
    with pytest.raises(ParameterError):
        RlcSpec(10, 6)
    with pytest.raises(ParameterError):
        RlcSpec(0)
    with pytest.raises(ParameterError):
        rlc_finite_buffer_throughput(RlcSpec(500), G, EPS)
    with pytest.raises(ParameterError):
        gf_tables(3)
