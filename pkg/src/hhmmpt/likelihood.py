"""Emission densities and forward-algorithm log-likelihoods.

Each likelihood has a scaled forward recursion (``*_loglik``) and an
exhaustive enumeration over hidden state sequences (``*_oracle``) used to
verify it on small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import (
    CovariateTriple,
    DomainError,
    EmissionParams,
    HierarchicalModel,
    TransitionMatrix,
    gamma_shape_rate,
)

PRODUCTION_ORACLE_LIMIT = 10**7
INTERNAL_ORACLE_LIMIT = 10**5


class OracleTooLarge(RuntimeError):
    """The brute-force enumeration would exceed its size guard."""


@dataclass(frozen=True)
class DiveFrame:
    observations: tuple[CovariateTriple, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        if len(self.observations) < 1:
            raise DomainError("a dive frame needs at least one observation")

    def __len__(self) -> int:
        return len(self.observations)

    def to_array(self) -> np.ndarray:
        return np.array([o.as_tuple() for o in self.observations], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "DiveFrame":
        return cls(tuple(CovariateTriple(*map(float, row)) for row in np.asarray(arr, dtype=float)))


@dataclass(frozen=True)
class DataSet:
    frames: tuple[DiveFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 1:
            raise DomainError("a data set needs at least one frame")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_dives(self) -> int:
        return sum(len(f) for f in self.frames)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (n_dives, 3) observations and frame start offsets of length M+1."""
        obs = np.concatenate([f.to_array() for f in self.frames], axis=0)
        offsets = np.concatenate([[0], np.cumsum([len(f) for f in self.frames])]).astype(np.int64)
        return obs, offsets

    @classmethod
    def from_arrays(cls, obs, offsets) -> "DataSet":
        obs = np.asarray(obs, dtype=float)
        return cls(tuple(DiveFrame.from_array(obs[a:b]) for a, b in zip(offsets[:-1], offsets[1:])))


def _gamma_logpdf(x, shape: float, rate: float):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
    if shape == 1.0:
        # exponential case: 0 * log(0) would give nan
        out = np.where(x == 0, math.log(rate), out)
    return np.where(x < 0, -np.inf, out)


def emission_logdensities(obs: np.ndarray, params: EmissionParams) -> np.ndarray:
    """Log emission density of every observation under every production state.

    ``obs`` is an (n, 3) array of (duration, max_depth, wiggliness); the
    result is (n, N).
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    out = np.empty((obs.shape[0], params.n_states))
    wig = obs[:, 2]
    is_zero = wig == 0.0
    for n, st in enumerate(params.states):
        lp = _gamma_logpdf(obs[:, 0], *gamma_shape_rate(st.duration))
        lp = lp + _gamma_logpdf(obs[:, 1], *gamma_shape_rate(st.max_depth))
        with np.errstate(divide="ignore"):
            log_zero = math.log(st.zero_mass) if st.zero_mass > 0 else -np.inf
            log_pos = math.log1p(-st.zero_mass) if st.zero_mass < 1 else -np.inf
        wig_pos = _gamma_logpdf(np.where(is_zero, 1.0, wig), *gamma_shape_rate(st.wiggliness))
        lp = lp + np.where(is_zero, log_zero, log_pos + wig_pos)
        out[:, n] = lp
    return out


def log_emission(y: CovariateTriple, state: int, params: EmissionParams) -> float:
    if not 0 <= state < params.n_states:
        raise DomainError(f"state index {state} out of range")
    return float(emission_logdensities(np.array([y.as_tuple()]), params)[0, state])


def _check_dims(g: np.ndarray, init: np.ndarray, n: int):
    if g.shape != (n, n) or init.shape != (n,):
        raise DomainError(f"dimension mismatch: t.p.m. {g.shape}, init {init.shape}, {n} emission states")


def forward_loglik(log_b: np.ndarray, g: np.ndarray, init: np.ndarray) -> float:
    """Scaled forward recursion on a (T, N) matrix of log emission densities.

    Each step divides the forward vector by its sum and by the per-step
    maximum emission density, accumulating both in log space.
    """
    total = 0.0
    alpha = init
    for t in range(log_b.shape[0]):
        row = log_b[t]
        shift = row.max()
        if shift == -np.inf:
            return -np.inf
        v = (alpha if t == 0 else alpha @ g) * np.exp(row - shift)
        c = v.sum()
        if not c > 0:
            return -np.inf
        total += math.log(c) + shift
        alpha = v / c
    return float(total)


def production_loglik(frame: DiveFrame, g: TransitionMatrix, init, params: EmissionParams) -> float:
    gamma = np.asarray(g.entries if isinstance(g, TransitionMatrix) else g, dtype=float)
    init = np.asarray(init, dtype=float)
    _check_dims(gamma, init, params.n_states)
    return forward_loglik(emission_logdensities(frame.to_array(), params), gamma, init)


def production_loglik_oracle(frame: DiveFrame, g: TransitionMatrix, init, params: EmissionParams) -> float:
    gamma = np.asarray(g.entries if isinstance(g, TransitionMatrix) else g, dtype=float)
    init = np.asarray(init, dtype=float)
    n = params.n_states
    _check_dims(gamma, init, n)
    T = len(frame)
    if n**T > PRODUCTION_ORACLE_LIMIT:
        raise OracleTooLarge(f"{n}^{T} state sequences exceed the enumeration guard")
    log_b = emission_logdensities(frame.to_array(), params)
    with np.errstate(divide="ignore"):
        log_g = np.log(gamma)
        log_init = np.log(init)
    terms = []
    for seq in itertools.product(range(n), repeat=T):
        lp = log_init[seq[0]] + log_b[0, seq[0]]
        for t in range(1, T):
            lp += log_g[seq[t - 1], seq[t]] + log_b[t, seq[t]]
        terms.append(lp)
    return float(logsumexp(terms))


def frame_logliks(data: DataSet, model: HierarchicalModel) -> np.ndarray:
    """(M, K) matrix of production-level log-likelihoods of each frame under each internal state."""
    out = np.empty((len(data), model.K))
    for m, frame in enumerate(data.frames):
        log_b = emission_logdensities(frame.to_array(), model.emissions)
        for k in range(model.K):
            out[m, k] = forward_loglik(log_b, model.production_tpms[k].entries, model.production_inits[k])
    return out


def hierarchical_loglik(data: DataSet, model: HierarchicalModel) -> float:
    if model.emissions.n_states != model.production_tpms[0].size:
        raise DomainError("emission and t.p.m. dimensions disagree")
    lp = frame_logliks(data, model)
    return forward_loglik(lp, model.internal_tpm.entries, np.asarray(model.internal_init))


def hierarchical_loglik_oracle(data: DataSet, model: HierarchicalModel) -> float:
    K, M = model.K, len(data)
    if K**M > INTERNAL_ORACLE_LIMIT:
        raise OracleTooLarge(f"{K}^{M} internal sequences exceed the enumeration guard")
    lp = np.empty((M, K))
    for m, frame in enumerate(data.frames):
        for k in range(K):
            lp[m, k] = production_loglik_oracle(frame, model.production_tpms[k],
                                                model.production_inits[k], model.emissions)
    with np.errstate(divide="ignore"):
        log_g = np.log(model.internal_tpm.entries)
        log_init = np.log(model.internal_init)
    terms = []
    for seq in itertools.product(range(K), repeat=M):
        s = log_init[seq[0]] + lp[0, seq[0]]
        for m in range(1, M):
            s += log_g[seq[m - 1], seq[m]] + lp[m, seq[m]]
        terms.append(s)
    return float(logsumexp(terms))
