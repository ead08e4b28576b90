"""Small analytic energies for checking sampler behaviour."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samplers import FunctionTarget


def standard_normal_energy(x) -> float:
    return 0.5 * float(np.dot(x, x))


@dataclass(frozen=True)
class DoubleWell:
    """Equal mixture of unit-variance normals at -separation and +separation.

    E(x) = -log(exp(-(x - s)^2 / 2) + exp(-(x + s)^2 / 2)), up to a constant.
    With s = 5.5 the barrier at x = 0 is about 15 energy units above the wells,
    which a unit-scale random walk essentially never crosses at beta = 1 but
    crosses readily at beta = 0.25.
    """

    separation: float = 5.5

    def __call__(self, x) -> float:
        v = float(x[0])
        s = self.separation
        return -float(np.logaddexp(-0.5 * (v - s) ** 2, -0.5 * (v + s) ** 2))

    def target(self) -> FunctionTarget:
        return FunctionTarget(self, ["x"])

    @staticmethod
    def well(values) -> np.ndarray:
        """+1 for the right-hand well, -1 for the left."""
        return np.where(np.asarray(values) > 0.0, 1, -1)
