"""Result container shared by the Monte-Carlo simulators."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class SimResult:
    """Estimated performance at one load point.

    ``half_width_95`` is the 95% normal-approximation half width of the
    packet loss rate and ``throughput_half_width`` that of the throughput.
    ``spectral_efficiency`` is ``S * R`` and ``normalized_capacity`` divides
    it by the sum-rate capacity of the equivalent Gaussian multiple-access
    channel; either is ``None`` when no rate is defined.
    """

    load: float
    throughput: float
    plr: float
    trials: int
    users: int
    half_width_95: float
    throughput_half_width: float
    spectral_efficiency: float | None = None
    normalized_capacity: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.plr <= 1.0:
            raise ValueError(f"plr {self.plr} outside [0, 1]")

    def as_row(self) -> dict:
        return asdict(self)
