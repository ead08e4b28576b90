"""Priors, the flat parameter vector and the energy E = -log L - log p."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import DataSet, hierarchical_loglik
from .model import (
    COVARIATES,
    DomainError,
    EmissionParams,
    GammaParams,
    HierarchicalModel,
    StateEmission,
    TransitionMatrix,
    simplex_complete,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LogNormal:
    location: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("log-normal scale must be positive")

    def logpdf(self, x: float) -> float:
        if not x > 0:
            return -math.inf
        lx = math.log(x)
        z = (lx - self.location) / self.scale
        return -lx - math.log(self.scale) - _LOG_SQRT_2PI - 0.5 * z * z


@dataclass(frozen=True)
class InvGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("inverse-gamma hyperparameters must be positive")

    def logpdf(self, x: float) -> float:
        if not x > 0:
            return -math.inf
        a, b = self.shape, self.scale
        return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("beta hyperparameters must be positive")

    def logpdf(self, x: float) -> float:
        """Log density; an endpoint counts as in-support only where the density is finite."""
        if not 0.0 <= x <= 1.0:
            return -math.inf
        a, b = self.a, self.b
        norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        if x == 0.0:
            return norm if a == 1.0 else -math.inf
        if x == 1.0:
            return norm if b == 1.0 else -math.inf
        return norm + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)


@dataclass(frozen=True)
class PriorConfig:
    mean_prior: LogNormal = field(default_factory=lambda: LogNormal(math.log(100.0), 1.0))
    sd_prior: InvGamma = field(default_factory=lambda: InvGamma(1e-3, 1e-3))
    zero_mass_prior: Beta = field(default_factory=lambda: Beta(1.0, 1.0))
    tpm_entry_prior: Beta = field(default_factory=lambda: Beta(0.5, 0.5))

    def for_role(self, role: str):
        if role == "mean":
            return self.mean_prior
        if role == "sd":
            return self.sd_prior
        if role == "zero_mass":
            return self.zero_mass_prior
        if role in ("prod_tpm", "internal_tpm"):
            return self.tpm_entry_prior
        # free initial distributions carry a flat prior on the simplex
        return None


@dataclass(frozen=True)
class ParamInfo:
    name: str
    role: str
    state: int
    covariate: int = -1
    k: int = -1
    col: int = -1


EMISSION_ROLES = ("mean", "sd", "zero_mass")
SIMPLEX_ROLES = ("prod_tpm", "internal_tpm", "prod_init", "internal_init")


@dataclass(frozen=True)
class ParameterSchema:
    """Ordering of the free parameters in the flat vector."""

    N: int
    K: int
    tpm_estimation: bool = False
    init_mode: str = "derived"
    params: tuple[ParamInfo, ...] = field(init=False)

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise DomainError("need at least one production and one internal state")
        if self.init_mode not in ("derived", "free"):
            raise DomainError(f"unknown init_mode {self.init_mode!r}")
        N, K = self.N, self.K
        ps: list[ParamInfo] = []
        for c, cov in enumerate(COVARIATES):
            for role in ("mean", "sd"):
                for n in range(N):
                    ps.append(ParamInfo(f"{cov}_{role}_{n + 1}", role, n, covariate=c))
        for n in range(N):
            ps.append(ParamInfo(f"zero_mass_{n + 1}", "zero_mass", n, covariate=2))
        if self.tpm_estimation:
            for k in range(K):
                for i in range(N):
                    for j in range(N - 1):
                        ps.append(ParamInfo(f"tpm_prod{k + 1}_{i + 1}_{j + 1}", "prod_tpm", i, k=k, col=j))
            for i in range(K):
                for j in range(K - 1):
                    ps.append(ParamInfo(f"tpm_internal_{i + 1}_{j + 1}", "internal_tpm", i, col=j))
        if self.init_mode == "free":
            for k in range(K):
                for j in range(N - 1):
                    ps.append(ParamInfo(f"init_prod{k + 1}_{j + 1}", "prod_init", j, k=k, col=j))
            for j in range(K - 1):
                ps.append(ParamInfo(f"init_internal_{j + 1}", "internal_init", j, col=j))
        object.__setattr__(self, "params", tuple(ps))

    def __len__(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def indices(self, role: str, covariate: int | None = None) -> list[int]:
        return [i for i, p in enumerate(self.params)
                if p.role == role and (covariate is None or p.covariate == covariate)]

    def simplex_groups(self) -> list[tuple[str, list[int]]]:
        """Free entries of each t.p.m. row / initial vector, in schema order."""
        groups: dict[tuple, list[int]] = {}
        for i, p in enumerate(self.params):
            if p.role in SIMPLEX_ROLES:
                key = (p.role, p.k, p.state if p.role.endswith("tpm") else -1)
                groups.setdefault(key, []).append(i)
        out = []
        for (role, k, row), idx in groups.items():
            label = role + (f"{k + 1}" if k >= 0 else "") + (f"_row{row + 1}" if row >= 0 else "")
            out.append((label, idx))
        return out


@dataclass(frozen=True, eq=False)
class ParameterVector:
    values: np.ndarray
    schema: ParameterSchema

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.schema),):
            raise DomainError(f"parameter vector has length {v.shape}, schema expects {len(self.schema)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.schema.index(name)])


def theta_from_model(model: HierarchicalModel, schema: ParameterSchema) -> ParameterVector:
    emis = model.emissions.to_array()
    vals = []
    for p in schema.params:
        if p.role == "mean":
            vals.append(emis[p.state, 2 * p.covariate])
        elif p.role == "sd":
            vals.append(emis[p.state, 2 * p.covariate + 1])
        elif p.role == "zero_mass":
            vals.append(emis[p.state, 6])
        elif p.role == "prod_tpm":
            vals.append(model.production_tpms[p.k].entries[p.state, p.col])
        elif p.role == "internal_tpm":
            vals.append(model.internal_tpm.entries[p.state, p.col])
        elif p.role == "prod_init":
            vals.append(model.production_inits[p.k][p.col])
        elif p.role == "internal_init":
            vals.append(model.internal_init[p.col])
    return ParameterVector(np.array(vals), schema)


def unpack(values, schema: ParameterSchema, base: HierarchicalModel):
    """Natural-scale arrays for the model encoded by ``values``.

    Returns (emissions (N, 7), production tpms (K, N, N), internal tpm (K, K),
    production inits (K, N) or None, internal init (K,) or None); inits are
    None when they are derived from the t.p.m.s. Rows whose completion is
    negative raise DomainError.
    """
    N, K = schema.N, schema.K
    emis = base.emissions.to_array()
    tpms = np.array([g.entries for g in base.production_tpms])
    itpm = np.array(base.internal_tpm.entries)
    pinit = np.array([np.asarray(p) for p in base.production_inits]) if schema.init_mode == "free" else None
    iinit = np.array(base.internal_init) if schema.init_mode == "free" else None
    for v, p in zip(values, schema.params):
        if p.role == "mean":
            emis[p.state, 2 * p.covariate] = v
        elif p.role == "sd":
            emis[p.state, 2 * p.covariate + 1] = v
        elif p.role == "zero_mass":
            emis[p.state, 6] = v
        elif p.role == "prod_tpm":
            tpms[p.k, p.state, p.col] = v
        elif p.role == "internal_tpm":
            itpm[p.state, p.col] = v
        elif p.role == "prod_init":
            pinit[p.k, p.col] = v
        elif p.role == "internal_init":
            iinit[p.col] = v
    if schema.tpm_estimation:
        for k in range(K):
            for i in range(N):
                tpms[k, i] = _completed(tpms[k, i, :-1])
        for i in range(K):
            itpm[i] = _completed(itpm[i, :-1])
    if schema.init_mode == "free":
        for k in range(K):
            pinit[k] = _completed(pinit[k, :-1])
        iinit = _completed(iinit[:-1])
    return emis, tpms, itpm, pinit, iinit


def _completed(partial) -> np.ndarray:
    row = simplex_complete(partial)
    if row is None:
        raise DomainError("free entries leave the probability simplex")
    return row


def model_from_theta(theta: ParameterVector, base: HierarchicalModel) -> HierarchicalModel:
    emis, tpms, itpm, pinit, iinit = unpack(theta.values, theta.schema, base)
    emissions = EmissionParams(tuple(
        StateEmission(GammaParams(r[0], r[1]), GammaParams(r[2], r[3]), GammaParams(r[4], r[5]), float(r[6]))
        for r in emis
    ))
    return HierarchicalModel(
        internal_tpm=TransitionMatrix(itpm),
        production_tpms=tuple(TransitionMatrix(g) for g in tpms),
        emissions=emissions,
        internal_init=iinit,
        production_inits=None if pinit is None else tuple(pinit),
        init_mode=theta.schema.init_mode,
    )


def prior_terms(values, schema: ParameterSchema, cfg: PriorConfig) -> np.ndarray:
    out = np.zeros(len(schema))
    for i, (v, p) in enumerate(zip(values, schema.params)):
        out[i] = prior_term(p, float(v), cfg)
    return out


def prior_term(p: ParamInfo, v: float, cfg: PriorConfig) -> float:
    dist = cfg.for_role(p.role)
    if dist is None:
        return 0.0 if 0.0 <= v <= 1.0 else -math.inf
    return dist.logpdf(v)


def log_prior(theta: ParameterVector, cfg: PriorConfig) -> float:
    return float(prior_terms(theta.values, theta.schema, cfg).sum())


def energy(theta: ParameterVector, data: DataSet, cfg: PriorConfig, base: HierarchicalModel) -> float:
    """Reference energy through the plain numpy likelihood; +inf off-support."""
    lp = log_prior(theta, cfg)
    if lp == -math.inf:
        return math.inf
    try:
        model = model_from_theta(theta, base)
    except DomainError:
        return math.inf
    ll = hierarchical_loglik(data, model)
    if not math.isfinite(ll):
        return math.inf
    return -ll - lp
