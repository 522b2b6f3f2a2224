from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ra_lab.channels import (
    ChannelModel,
    ChannelSpec,
    ParameterError,
    capture_test,
    db_to_linear,
    decode_block_interference,
    decode_collision,
    linear_to_db,
    mutual_information,
    sample_rayleigh_snr,
    sinr_profile,
)


@given(st.floats(-60, 60))
def test_db_round_trip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


def test_db_reference_values():
    assert db_to_linear(20) == pytest.approx(100.0)
    assert db_to_linear(3) == pytest.approx(1.99526, rel=1e-5)


def test_channel_spec_coerces_model_string():
    assert ChannelSpec(model="rayleigh_capture").model is ChannelModel.RAYLEIGH_CAPTURE


@pytest.mark.parametrize(
    "kwargs",
    [
        {"noise_power": 0.0},
        {"signal_power": -1.0},
        {"mean_snr": 0.0},
        {"capture_threshold": 0.5},
        {"rate": 0.0},
    ],
)
def test_channel_spec_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        ChannelSpec(**kwargs)


def test_capture_equality_captures():
    # SINR exactly on the threshold is a capture
    assert capture_test(6.0, [1.0, 1.0], threshold=2.0)
    assert not capture_test(5.999, [1.0, 1.0], threshold=2.0)


def test_capture_without_interferers_is_snr_test():
    assert capture_test(2.0, [], threshold=2.0)
    with pytest.raises(ParameterError):
        capture_test(2.0, [], threshold=0.9)


def test_rayleigh_snr_mean_and_law():
    rng = np.random.default_rng(1)
    x = sample_rayleigh_snr(100.0, rng, size=200_000)
    assert x.mean() == pytest.approx(100.0, rel=0.01)
    # P(B > b) = exp(-b / mean)
    assert np.mean(x > 50.0) == pytest.approx(math.exp(-0.5), abs=0.004)


def test_sinr_profile():
    np.testing.assert_allclose(sinr_profile([0, 1, 3], 4.0, 1.0), [4.0, 0.8, 4.0 / 13.0])


@given(st.floats(0.01, 100.0), st.floats(0.01, 8.0))
def test_single_symbol_decoder_is_point_to_point(snr, rate):
    assert decode_block_interference(rate, [snr]) == (rate <= math.log2(1.0 + snr))


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=20))
def test_mutual_information_between_extremes(gammas):
    mi = mutual_information(gammas)
    lo = math.log2(1.0 + min(gammas))
    hi = math.log2(1.0 + max(gammas))
    assert lo - 1e-12 <= mi <= hi + 1e-12


def test_mutual_information_rejects_bad_input():
    with pytest.raises(ParameterError):
        mutual_information([])
    with pytest.raises(ParameterError):
        mutual_information([1.0, -0.1])


def test_collision_decoder():
    assert decode_collision([0, 0, 0])
    assert not decode_collision([0, 1, 0])
    with pytest.raises(ParameterError):
        decode_collision([])
