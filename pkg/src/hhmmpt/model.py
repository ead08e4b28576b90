"""Domain types for the two-level HMM and the natural/working parameter maps.

State indices are 0-based throughout the code; CSV column names and
user-facing labels are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

COVARIATES = ("duration", "max_depth", "wiggliness")

ROW_SUM_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class CovariateTriple:
    duration: float
    max_depth: float
    wiggliness: float

    def __post_init__(self):
        if not (self.duration >= 0 and self.max_depth > 0 and self.wiggliness >= 0):
            raise DomainError(f"invalid dive covariates: {self}")
        if not all(math.isfinite(v) for v in (self.duration, self.max_depth, self.wiggliness)):
            raise DomainError(f"non-finite dive covariates: {self}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.duration, self.max_depth, self.wiggliness)


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution given by its mean and standard deviation."""

    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise DomainError(f"non-finite gamma parameters: {self}")
        if self.mean <= 0 or self.sd <= 0:
            raise DomainError(f"gamma mean and sd must be positive: {self}")


def gamma_shape_rate(g: GammaParams) -> tuple[float, float]:
    """Convert (mean, sd) to (shape, rate)."""
    mean, sd = float(g.mean), float(g.sd)
    if not (math.isfinite(mean) and math.isfinite(sd)) or mean <= 0 or sd <= 0:
        raise DomainError(f"gamma mean and sd must be finite and positive, got {mean}, {sd}")
    var = sd * sd
    shape = mean * mean / var
    rate = mean / var
    if not (math.isfinite(shape) and math.isfinite(rate)) or shape <= 0 or rate <= 0:
        raise DomainError(f"gamma parameters ({mean}, {sd}) has no finite shape/rate")
    return shape, rate


@dataclass(frozen=True)
class StateEmission:
    duration: GammaParams
    max_depth: GammaParams
    wiggliness: GammaParams
    zero_mass: float

    def __post_init__(self):
        if not (0.0 <= self.zero_mass <= 1.0):
            raise DomainError(f"zero_mass must lie in [0, 1], got {self.zero_mass}")

    def gamma(self, covariate: str) -> GammaParams:
        return getattr(self, covariate)


@dataclass(frozen=True)
class EmissionParams:
    """Per production state emission parameters, shared by all internal states."""

    states: tuple[StateEmission, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 1:
            raise DomainError("EmissionParams needs at least one state")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def __getitem__(self, n: int) -> StateEmission:
        return self.states[n]

    def to_array(self) -> np.ndarray:
        """Pack as an (N, 7) array: mean/sd for each covariate, then zero mass."""
        rows = []
        for s in self.states:
            rows.append([s.duration.mean, s.duration.sd, s.max_depth.mean, s.max_depth.sd,
                         s.wiggliness.mean, s.wiggliness.sd, s.zero_mass])
        return np.array(rows, dtype=float)

    @classmethod
    def from_array(cls, arr) -> "EmissionParams":
        arr = np.asarray(arr, dtype=float)
        return cls(tuple(
            StateEmission(GammaParams(r[0], r[1]), GammaParams(r[2], r[3]), GammaParams(r[4], r[5]), float(r[6]))
            for r in arr
        ))

    def permuted(self, perm: Sequence[int]) -> "EmissionParams":
        return EmissionParams(tuple(self.states[p] for p in perm))


def _as_matrix(entries) -> np.ndarray:
    g = np.array(entries, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {g.shape}")
    return g


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    entries: np.ndarray

    def __post_init__(self):
        g = _as_matrix(self.entries)
        if not np.all(np.isfinite(g)) or np.any(g < 0) or np.any(g > 1):
            raise DomainError("t.p.m. entries must lie in [0, 1]")
        if np.any(np.abs(g.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise DomainError(f"t.p.m. rows must sum to 1, got {g.sum(axis=1)}")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def permuted(self, perm: Sequence[int]) -> "TransitionMatrix":
        p = np.asarray(perm)
        return TransitionMatrix(self.entries[np.ix_(p, p)])


@dataclass(frozen=True, eq=False)
class WorkingMatrix:
    """Multinomial-logit working parameters; the diagonal is the reference category."""

    entries: np.ndarray

    def __post_init__(self):
        w = _as_matrix(self.entries)
        if np.any(np.diag(w) != 0.0):
            raise DomainError("working matrix diagonal must be zero")
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)


def tpm_from_working(w: WorkingMatrix, shift: bool = True) -> TransitionMatrix:
    """Row-wise softmax of the working matrix.

    ``shift`` subtracts each row's maximum before exponentiating; it exists so
    tests can compare against the unshifted evaluation.
    """
    eta = np.asarray(w.entries if isinstance(w, WorkingMatrix) else WorkingMatrix(w).entries, dtype=float)
    if shift:
        eta = eta - eta.max(axis=1, keepdims=True)
    e = np.exp(eta)
    return TransitionMatrix(e / e.sum(axis=1, keepdims=True))


def working_from_tpm(g: TransitionMatrix) -> WorkingMatrix:
    entries = g.entries if isinstance(g, TransitionMatrix) else TransitionMatrix(g).entries
    if np.any(entries <= 0):
        raise DomainError("working parameters need strictly positive t.p.m. entries")
    eta = np.log(entries) - np.log(np.diag(entries))[:, None]
    np.fill_diagonal(eta, 0.0)
    return WorkingMatrix(eta)


def stationary(g: TransitionMatrix) -> np.ndarray:
    """Stationary distribution pi with pi @ g = pi and sum(pi) = 1."""
    gamma = g.entries if isinstance(g, TransitionMatrix) else TransitionMatrix(g).entries
    n = gamma.shape[0]
    if n == 1:
        return np.ones(1)
    # balance equations with one of them replaced by the normalisation;
    # singular exactly when the stationary vector is not unique
    a = gamma.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DomainError("chain has no unique stationary distribution") from exc
    if not np.all(np.isfinite(pi)) or np.any(pi < -1e-10) or np.abs(pi @ gamma - pi).max() > 1e-10:
        raise DomainError("chain has no unique stationary distribution")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def simplex_complete(partial) -> np.ndarray | None:
    """Append ``1 - sum(partial)``; returns None when the completion is negative."""
    p = np.asarray(partial, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        return None
    last = 1.0 - p.sum()
    if last < 0:
        return None
    return np.append(p, last)


@dataclass(frozen=True, eq=False)
class HierarchicalModel:
    internal_tpm: TransitionMatrix
    production_tpms: tuple[TransitionMatrix, ...]
    emissions: EmissionParams
    internal_init: np.ndarray | None = None
    production_inits: tuple[np.ndarray, ...] | None = None
    init_mode: str = "derived"

    def __post_init__(self):
        object.__setattr__(self, "production_tpms", tuple(self.production_tpms))
        K, N = self.K, self.N
        if self.internal_tpm.size != K:
            raise DomainError("internal t.p.m. size must equal the number of production t.p.m.s")
        if any(g.size != N for g in self.production_tpms):
            raise DomainError("production t.p.m.s must match the number of emission states")
        if self.init_mode not in ("derived", "free"):
            raise DomainError(f"unknown init_mode {self.init_mode!r}")
        if self.init_mode == "derived":
            object.__setattr__(self, "internal_init", stationary(self.internal_tpm))
            object.__setattr__(self, "production_inits",
                               tuple(stationary(g) for g in self.production_tpms))
        else:
            if self.internal_init is None or self.production_inits is None:
                raise DomainError("init_mode='free' needs explicit initial distributions")
            object.__setattr__(self, "internal_init", _check_dist(self.internal_init, K))
            object.__setattr__(self, "production_inits",
                               tuple(_check_dist(p, N) for p in self.production_inits))
            if len(self.production_inits) != K:
                raise DomainError("need one production initial distribution per internal state")

    @property
    def K(self) -> int:
        return len(self.production_tpms)

    @property
    def N(self) -> int:
        return self.emissions.n_states

    def permuted(self, production_perm=None, internal_perm=None) -> "HierarchicalModel":
        """Relabel states; the likelihood is invariant under this map."""
        pp = list(range(self.N)) if production_perm is None else list(production_perm)
        ip = list(range(self.K)) if internal_perm is None else list(internal_perm)
        tpms = tuple(self.production_tpms[k].permuted(pp) for k in ip)
        inits = tuple(np.asarray(self.production_inits[k])[pp] for k in ip)
        return HierarchicalModel(
            internal_tpm=self.internal_tpm.permuted(ip),
            production_tpms=tpms,
            emissions=self.emissions.permuted(pp),
            internal_init=np.asarray(self.internal_init)[ip],
            production_inits=inits,
            init_mode="free",
        )


def _check_dist(p, n: int) -> np.ndarray:
    p = np.array(p, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
        raise DomainError(f"invalid probability vector {p}")
    p.setflags(write=False)
    return p


def diagonal_tpm(n: int, diag: float) -> TransitionMatrix:
    """Diagonal-dominant t.p.m. with the off-diagonal remainder split evenly."""
    if n == 1:
        return TransitionMatrix([[1.0]])
    g = np.full((n, n), (1.0 - diag) / (n - 1))
    np.fill_diagonal(g, diag)
    return TransitionMatrix(g)


# Reference estimates, maximum likelihood and Bayesian: (mean, sd) per covariate for production states 1..3,
# plus the wiggliness zero mass.
TABLE2_MLE = {
    "duration": ((5.633, 4.368), (32.167, 15.138), (106.817, 38.417)),
    "max_depth": ((3.738, 1.425), (13.188, 5.288), (39.613, 18.111)),
    "wiggliness": ((1.455, 1.203), (11.292, 7.681), (45.822, 24.374)),
    "zero_mass": (0.309, 0.008, 0.0002),
}

TABLE2_BAYES = {
    "duration": ((5.711, 4.440), (32.321, 15.159), (106.891, 38.391)),
    "max_depth": ((3.766, 1.449), (13.241, 5.293), (39.658, 18.135)),
    "wiggliness": ((1.482, 1.233), (11.362, 7.701), (45.893, 24.402)),
    "zero_mass": (0.307, 0.008, 0.0006),
}

# Reference random-walk scales after pilot tuning, same layout.
TABLE1_DELTAS = {
    "duration": ((0.218, 0.258), (0.878, 0.779), (2.200, 1.949)),
    "max_depth": ((0.110, 0.102), (0.286, 0.278), (0.972, 0.857)),
    "wiggliness": ((0.081, 0.073), (0.330, 0.320), (1.210, 1.187)),
    "zero_mass": (0.052, 0.008, 0.001),
}

PRESETS = {"table2_mle": TABLE2_MLE, "table2_bayes": TABLE2_BAYES}


def emissions_from_table(table: dict) -> EmissionParams:
    n = len(table["zero_mass"])
    return EmissionParams(tuple(
        StateEmission(
            duration=GammaParams(*table["duration"][i]),
            max_depth=GammaParams(*table["max_depth"][i]),
            wiggliness=GammaParams(*table["wiggliness"][i]),
            zero_mass=table["zero_mass"][i],
        )
        for i in range(n)
    ))


def default_model(preset: str = "table2_bayes") -> HierarchicalModel:
    """Three production states, two internal states, artifact-chosen t.p.m.s."""
    return HierarchicalModel(
        internal_tpm=TransitionMatrix([[0.95, 0.05], [0.05, 0.95]]),
        production_tpms=(diagonal_tpm(3, 0.9), diagonal_tpm(3, 0.6)),
        emissions=emissions_from_table(PRESETS[preset]),
    )
