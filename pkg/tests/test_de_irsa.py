from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ra_lab.channels import ParameterError, db_to_linear
from ra_lab.de_irsa import (
    ConvergenceError,
    DeParams,
    burst_update,
    capture_prob,
    capture_step_prob,
    collision_de_fixed_point,
    collision_load_threshold,
    de_fixed_point,
    load_threshold,
    slot_update,
)
from ra_lab.degree import DegreeDistribution
from oracles import mc_capture_prob

MEAN_SNR = db_to_linear(20)
B_STAR = db_to_linear(3)


def test_single_burst_capture():
    assert capture_prob(1, MEAN_SNR, B_STAR) == pytest.approx(math.exp(-B_STAR / MEAN_SNR), rel=1e-12)
    assert capture_prob(1, MEAN_SNR, B_STAR) == pytest.approx(0.9803, abs=1e-4)


@pytest.mark.parametrize("r", range(1, 7))
def test_capture_prob_matches_monte_carlo(r):
    rng = np.random.default_rng(100 + r)
    trials = 400_000
    mc = mc_capture_prob(r, MEAN_SNR, B_STAR, trials, rng)
    exact = capture_prob(r, MEAN_SNR, B_STAR)
    sigma = math.sqrt(exact * (1 - exact) / trials) + 1e-4
    assert abs(mc - exact) < 4 * sigma


def test_capture_steps_sum_below_one():
    for r in range(1, 12):
        steps = [capture_step_prob(r, t, MEAN_SNR, B_STAR) for t in range(1, r + 1)]
        assert all(s >= 0 for s in steps)
        assert sum(steps) <= 1.0 + 1e-12
    with pytest.raises(ParameterError):
        capture_step_prob(3, 4, MEAN_SNR, B_STAR)


@given(st.floats(0.0, 1.0), st.floats(0.05, 3.0))
def test_slot_update_is_poisson_mixture_of_capture(q, load):
    dist = DegreeDistribution({2: 0.5, 3: 0.5})
    params = DeParams(mean_snr=MEAN_SNR, threshold=B_STAR)
    x = load * dist.mean * q
    r = np.arange(1, 80)
    direct = 1.0 - sum(stats.poisson.pmf(k - 1, x) * capture_prob(int(k), MEAN_SNR, B_STAR) for k in r)
    assert slot_update(q, load, dist, params) == pytest.approx(direct, abs=1e-10)


@given(st.floats(0.0, 1.0))
def test_burst_update(p):
    dist = DegreeDistribution({2: 0.4, 5: 0.6})
    lam2 = 0.8 / dist.mean
    lam5 = 3.0 / dist.mean
    assert burst_update(p, dist) == pytest.approx(lam2 * p + lam5 * p ** 4, abs=1e-14)


def test_fixed_point_satisfies_recursion():
    dist = DegreeDistribution({2: 0.61, 3: 0.25, 6: 0.03, 7: 0.02, 8: 0.07, 10: 0.02})
    params = DeParams(mean_snr=MEAN_SNR, threshold=B_STAR)
    for g in (0.5, 1.5, 2.5):
        p, plr = de_fixed_point(dist, g, params)
        assert slot_update(burst_update(p, dist), g, dist, params) == pytest.approx(p, abs=1e-8)
        assert plr == pytest.approx(sum(w * p ** d for d, w in dist.probs.items()))


def test_plr_non_decreasing_in_load():
    dist = DegreeDistribution({2: 0.5, 3: 0.5})
    params = DeParams()
    plrs = [de_fixed_point(dist, g, params)[1] for g in np.linspace(0.1, 3.0, 30)]
    assert all(b >= a - 1e-12 for a, b in zip(plrs, plrs[1:]))


def test_collision_regular_three_threshold():
    # the collision-channel threshold of x^3 is about 0.818
    assert collision_load_threshold(DegreeDistribution.regular(3)) == pytest.approx(0.818, abs=0.005)


def test_collision_fixed_point_at_zero_load():
    p, plr = collision_de_fixed_point(DegreeDistribution.regular(3), 0.0)
    assert p == 0.0 and plr == 0.0


def test_capture_raises_threshold_above_collision():
    dist = DegreeDistribution.regular(3)
    assert load_threshold(dist, DeParams(mean_snr=MEAN_SNR, threshold=B_STAR)) > collision_load_threshold(dist)


def test_series_truncation_is_reported():
    params = DeParams(series_cap=2, term_tol=1e-300)
    with pytest.raises(ConvergenceError):
        de_fixed_point(DegreeDistribution.regular(2), 1.0, params)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        DeParams(target_plr=1.5)
    with pytest.raises(ParameterError):
        de_fixed_point(DegreeDistribution.regular(2), -1.0, DeParams())
