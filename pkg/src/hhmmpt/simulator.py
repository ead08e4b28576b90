"""Generative sampling from a hierarchical HMM with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .likelihood import DataSet
from .model import COVARIATES, DomainError, HierarchicalModel, gamma_shape_rate


@dataclass(frozen=True)
class SimConfig:
    model: HierarchicalModel
    M: int
    T: int | Sequence[int]
    seed: int

    def __post_init__(self):
        if self.M < 1:
            raise DomainError("need at least one frame")
        lengths = self.frame_lengths()
        if len(lengths) != self.M or min(lengths) < 1:
            raise DomainError("frame lengths must be positive, one per frame")

    def frame_lengths(self) -> list[int]:
        if isinstance(self.T, (int, np.integer)):
            return [int(self.T)] * self.M
        return [int(t) for t in self.T]


@dataclass(frozen=True)
class SimOutput:
    data: DataSet
    observations: np.ndarray  # (n_dives, 3)
    offsets: np.ndarray
    internal_states: np.ndarray  # (M,)
    production_states: np.ndarray  # (n_dives,), flattened across frames

    def production_states_by_frame(self) -> list[np.ndarray]:
        o = self.offsets
        return [self.production_states[a:b] for a, b in zip(o[:-1], o[1:])]


def _markov_path(rng: np.random.Generator, init: np.ndarray, tpm: np.ndarray, length: int) -> np.ndarray:
    u = rng.random(length)
    cum_init = np.cumsum(init)
    cum_tpm = np.cumsum(tpm, axis=1)
    n = len(init)
    out = np.empty(length, dtype=np.int64)
    out[0] = min(np.searchsorted(cum_init, u[0], side="right"), n - 1)
    for t in range(1, length):
        out[t] = min(np.searchsorted(cum_tpm[out[t - 1]], u[t], side="right"), n - 1)
    return out


def simulate(cfg: SimConfig) -> SimOutput:
    model = cfg.model
    rng = np.random.default_rng(cfg.seed)
    lengths = cfg.frame_lengths()
    internal = _markov_path(rng, np.asarray(model.internal_init), model.internal_tpm.entries, cfg.M)
    prod = np.concatenate([
        _markov_path(rng, np.asarray(model.production_inits[h]), model.production_tpms[h].entries, t)
        for h, t in zip(internal, lengths)
    ])
    n = prod.shape[0]
    obs = np.empty((n, 3))
    emis = model.emissions
    for c, cov in enumerate(COVARIATES):
        shape_rate = np.array([gamma_shape_rate(emis[j].gamma(cov)) for j in range(emis.n_states)])
        obs[:, c] = rng.gamma(shape_rate[prod, 0], 1.0 / shape_rate[prod, 1])
    zero_mass = np.array([emis[j].zero_mass for j in range(emis.n_states)])
    zero = rng.random(n) < zero_mass[prod]
    obs[zero, 2] = 0.0
    # gamma draws can underflow to exactly zero for tiny shapes; depth must stay positive
    obs[:, 1] = np.maximum(obs[:, 1], np.finfo(float).tiny)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return SimOutput(
        data=DataSet.from_arrays(obs, offsets),
        observations=obs,
        offsets=offsets,
        internal_states=internal,
        production_states=prod,
    )
