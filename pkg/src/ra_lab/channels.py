"""Channel models and decoding predicates shared by all simulators.

All powers and SNRs are linear here. Conversion from dB happens at the
configuration boundary (see :func:`db_to_linear`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ParameterError(ValueError):
    """Raised when an operation receives parameters outside its domain."""


class ChannelModel(str, enum.Enum):
    COLLISION = "collision"
    BLOCK_INTERFERENCE = "block_interference"
    RAYLEIGH_CAPTURE = "rayleigh_capture"


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel selector plus the physical parameters the decoders need.

    Parameters
    ----------
    model:
        Which decoding model applies.
    signal_power, noise_power:
        Received power ``P`` of every user and noise power ``N`` (linear).
    mean_snr:
        Average SNR of the Rayleigh block-fading channel (linear).
    capture_threshold:
        SINR threshold ``b*`` of the capture model (linear, at least 1).
    rate:
        Code rate in bits per symbol for the capacity-based decoder.
    """

    model: ChannelModel = ChannelModel.COLLISION
    signal_power: float = 1.0
    noise_power: float = 1.0
    mean_snr: float = 100.0
    capture_threshold: float = 2.0
    rate: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", ChannelModel(self.model))
        if self.signal_power < 0:
            raise ParameterError("signal_power must be >= 0")
        if self.noise_power <= 0:
            raise ParameterError("noise_power must be > 0")
        if self.mean_snr <= 0:
            raise ParameterError("mean_snr must be > 0")
        if self.capture_threshold < 1:
            raise ParameterError("capture_threshold must be >= 1 (linear)")
        if self.rate <= 0:
            raise ParameterError("rate must be > 0")

    @property
    def snr(self) -> float:
        """Interference-free SNR ``P/N``."""
        return self.signal_power / self.noise_power


def sample_rayleigh_snr(mean_snr: float, rng: np.random.Generator, size=None):
    """Draw instantaneous SNRs of a Rayleigh block-fading link.

    The received SNR is exponentially distributed with mean ``mean_snr``.
    """
    if not mean_snr > 0:
        raise ParameterError(f"mean_snr must be positive, got {mean_snr}")
    return rng.exponential(mean_snr, size=size)


def capture_test(
    candidate_snr: float,
    residual_interferer_snrs: Sequence[float],
    threshold: float,
) -> bool:
    """Return True when the candidate replica is captured.

    The SINR ``B / (1 + sum(B_u))`` is compared against ``threshold``; equality
    captures.
    """
    if threshold < 1:
        raise ParameterError("capture threshold must be >= 1")
    interference = float(np.sum(residual_interferer_snrs)) if len(residual_interferer_snrs) else 0.0
    return candidate_snr / (1.0 + interference) >= threshold


def sinr_profile(interferer_counts, signal_power: float, noise_power: float) -> np.ndarray:
    """Per-symbol SINR ``P / (N + m P)`` for integer interferer counts ``m``."""
    m = np.asarray(interferer_counts, dtype=float)
    return signal_power / (noise_power + m * signal_power)


def mutual_information(sinr) -> float:
    """Average of ``log2(1 + gamma_i)`` over the symbols of a packet."""
    gamma = np.asarray(sinr, dtype=float)
    if gamma.size == 0:
        raise ParameterError("SINR vector must not be empty")
    if np.any(gamma < 0):
        raise ParameterError("SINR entries must be non-negative")
    return float(np.mean(np.log2(1.0 + gamma)))


def decode_block_interference(rate: float, sinr) -> bool:
    """Capacity-based decoding under block interference.

    A packet is decoded iff ``rate <= mean(log2(1 + gamma_i))``. With a single
    entry this is the point-to-point condition ``rate <= log2(1 + gamma)``.
    """
    return rate <= mutual_information(sinr)


def decode_collision(interferer_counts) -> bool:
    """Collision channel: decodable iff no symbol sees an interferer.

    This is the block-interference decoder with a rate so high that any
    interference is fatal but low enough that a clean packet always decodes,
    so it is expressed directly in terms of the counts.
    """
    m = np.asarray(interferer_counts)
    if m.size == 0:
        raise ParameterError("interferer profile must not be empty")
    return bool(np.all(m == 0))
