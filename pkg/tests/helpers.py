"""Random small instances shared by the test modules."""

import numpy as np

from hhmmpt.likelihood import DataSet
from hhmmpt.model import EmissionParams, GammaParams, HierarchicalModel, StateEmission, TransitionMatrix


def random_tpm(rng, n, floor=0.02):
    g = rng.dirichlet(np.ones(n), size=n) + floor
    return TransitionMatrix(g / g.sum(axis=1, keepdims=True))


def random_emissions(rng, n):
    states = []
    for _ in range(n):
        gammas = [GammaParams(rng.uniform(1, 50), rng.uniform(0.5, 20)) for _ in range(3)]
        states.append(StateEmission(*gammas, zero_mass=rng.uniform(0.0, 0.5)))
    return EmissionParams(tuple(states))


def random_model(rng, n, k):
    return HierarchicalModel(
        internal_tpm=random_tpm(rng, k),
        production_tpms=tuple(random_tpm(rng, n) for _ in range(k)),
        emissions=random_emissions(rng, n),
    )


def random_data(rng, lengths, zero_frac=0.2):
    """Positive covariates on the emission scale, with some exact zero wiggliness."""
    frames = []
    for t in lengths:
        obs = rng.gamma(2.0, 10.0, size=(t, 3)) + 1e-3
        obs[rng.random(t) < zero_frac, 2] = 0.0
        frames.append(obs)
    obs = np.concatenate(frames)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return DataSet.from_arrays(obs, offsets)
