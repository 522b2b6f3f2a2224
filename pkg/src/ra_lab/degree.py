"""Repetition-degree distributions for slotted random access."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channels import ParameterError

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability mass ``Lambda_d`` over the number of replicas ``d``.

    The node-perspective polynomial is ``Lambda(x) = sum_d Lambda_d x^d``.
    Coefficients are renormalised so that they sum to one exactly; inputs that
    are off by more than 1e-9 are rejected.
    """

    probs: Mapping[int, float]
    d_max: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.probs:
            raise ParameterError("degree distribution is empty")
        clean: dict[int, float] = {}
        for d, p in self.probs.items():
            d = int(d)
            p = float(p)
            if d < 1:
                raise ParameterError(f"degree {d} is not >= 1")
            if p < 0:
                raise ParameterError(f"negative probability for degree {d}")
            if p > 0:
                clean[d] = clean.get(d, 0.0) + p
        total = sum(clean.values())
        if abs(total - 1.0) > _SUM_TOL:
            raise ParameterError(f"probabilities sum to {total!r}, expected 1")
        clean = {d: clean[d] / total for d in sorted(clean)}
        object.__setattr__(self, "probs", clean)
        object.__setattr__(self, "d_max", max(clean))

    @classmethod
    def regular(cls, d: int) -> "DegreeDistribution":
        return cls({d: 1.0})

    @classmethod
    def from_vector(cls, coeffs, d_min: int = 1) -> "DegreeDistribution":
        """Build from a dense coefficient vector starting at degree ``d_min``."""
        return cls({d_min + i: float(c) for i, c in enumerate(coeffs) if c > 0})

    @property
    def degrees(self) -> np.ndarray:
        return np.fromiter(self.probs.keys(), dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.fromiter(self.probs.values(), dtype=float)

    @property
    def mean(self) -> float:
        return float(np.dot(self.degrees, self.weights))

    @property
    def rate(self) -> float:
        """``R = 1 / mean degree``."""
        return 1.0 / self.mean

    def dense(self, d_max: int | None = None) -> np.ndarray:
        """Dense vector ``v`` with ``v[d] = Lambda_d`` for ``d = 0..d_max``."""
        n = self.d_max if d_max is None else d_max
        out = np.zeros(n + 1)
        for d, p in self.probs.items():
            out[d] = p
        return out

    def edge_perspective(self) -> dict[int, float]:
        """``lambda_d = d Lambda_d / sum_t t Lambda_t``."""
        mean = self.mean
        return {d: d * p / mean for d, p in self.probs.items()}

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.degrees, size=size, p=self.weights)

    def __str__(self) -> str:
        return " + ".join(f"{p:.4g} x^{d}" for d, p in self.probs.items())
