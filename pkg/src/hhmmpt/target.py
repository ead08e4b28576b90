"""Posterior energy of a hierarchical HMM as a sampler target.

The evaluator keeps per-covariate log densities, scaled emission densities
and per-frame log-likelihoods between proposals, so a move that touches one
state's parameter only recomputes that state's column and the forward
passes that depend on it.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as kern
from .energy import (
    ParameterSchema,
    PriorConfig,
    prior_term,
    prior_terms,
    theta_from_model,
    unpack,
)
from .likelihood import DataSet
from .model import TABLE1_DELTAS, COVARIATES, DomainError, HierarchicalModel, simplex_complete, stationary
from .samplers import Block, ConfigurationError, UpdateSchedule

# full rescale when scaled densities leave this window
_LOW = 1e-200
_HIGH = 1e100
# exp below this underflows into subnormals, which is an order of magnitude slower
_EXP_FLOOR = -700.0


def _stationary_or_none(g: np.ndarray):
    try:
        return stationary(g)
    except DomainError:
        return None


def _floored_exp(x: np.ndarray, logb: np.ndarray) -> None:
    """In-place exp with arguments floored at _EXP_FLOOR; exact zeros stay zero."""
    np.maximum(x, _EXP_FLOOR, out=x)
    np.exp(x, out=x)
    if logb.min() == -np.inf:
        x[np.isneginf(logb)] = 0.0


class HMMTarget:
    def __init__(self, data: DataSet, priors: PriorConfig, schema: ParameterSchema, base: HierarchicalModel):
        if base.N != schema.N or base.K != schema.K:
            raise ConfigurationError("schema dimensions do not match the model")
        self.data = data
        self.priors = priors
        self.schema = schema
        self.base = base
        obs, offsets = data.to_arrays()
        self.x = np.ascontiguousarray(obs.T)
        with np.errstate(divide="ignore"):
            self.logx = np.log(self.x)
        self.is_zero = self.x[2] == 0.0
        self.offsets = offsets
        self.names = schema.names

    @property
    def n_dives(self) -> int:
        return self.x.shape[1]

    def evaluator(self, values) -> "HMMEvaluator":
        return HMMEvaluator(self, values)

    def energy(self, values) -> float:
        return HMMEvaluator(self, values).energy

    def loglik(self, values) -> float:
        return HMMEvaluator(self, values).loglik

    def schedule(self, mode: str) -> UpdateSchedule:
        return build_schedule(self.schema, mode)


class HMMEvaluator:
    def __init__(self, target: HMMTarget, values):
        self.t = target
        self.reset(values)

    # -- full evaluation -------------------------------------------------
    def reset(self, values) -> float:
        t = self.t
        s = t.schema
        self.values = np.array(values, dtype=float)
        n = t.n_dives
        self.parts = np.zeros((3, s.N, n))
        self.logb = np.zeros((s.N, n))
        self.b = np.zeros((s.N, n))
        self.shift = np.zeros(n)
        self.shift_sums = np.zeros(len(t.offsets) - 1)
        self.frame_ll = np.full((s.K, len(t.offsets) - 1), -np.inf)
        self.prior = prior_terms(self.values, s, t.priors)
        self._undo = []
        self.valid = False
        self.loglik = -math.inf
        self.energy = math.inf
        if not np.all(np.isfinite(self.prior)):
            return self.energy
        try:
            emis, tpms, itpm, pinit, iinit = unpack(self.values, s, t.base)
        except DomainError:
            return self.energy
        self.emis, self.tpms, self.itpm = emis, tpms, itpm
        if s.init_mode == "derived":
            pinit = [_stationary_or_none(g) for g in tpms]
            iinit = _stationary_or_none(itpm)
            if iinit is None or any(p is None for p in pinit):
                return self.energy
            pinit = np.array(pinit)
        self.pinit, self.iinit = pinit, iinit
        for c in range(3):
            for j in range(s.N):
                self._write_part(c, j)
        for j in range(s.N):
            self.logb[j] = self.parts[0, j] + self.parts[1, j] + self.parts[2, j]
        self._rescale_all()
        for k in range(s.K):
            self._forward(k)
        self.valid = True
        return self._finish()

    def _write_part(self, c: int, j: int) -> None:
        e = self.emis[j]
        mean, sd = e[2 * c], e[2 * c + 1]
        shape = mean * mean / (sd * sd)
        rate = mean / (sd * sd)
        t = self.t
        if c == 2:
            kern.wiggliness_logpdf_into(t.x[2], t.logx[2], t.is_zero, shape, rate, e[6], self.parts[2, j])
        else:
            kern.gamma_logpdf_into(t.x[c], t.logx[c], shape, rate, self.parts[c, j])

    def _rescale_all(self) -> None:
        anchor = self.logb.argmax(axis=0)
        # anchored[j, t]: state j attained dive t's maximum when the shift was set
        self.anchored = anchor[None, :] == np.arange(self.t.schema.N)[:, None]
        shift = self.logb[anchor, np.arange(self.logb.shape[1])]
        self.shift = np.where(np.isfinite(shift), shift, 0.0)
        self.shift_sums = np.add.reduceat(self.shift, self.t.offsets[:-1])
        np.subtract(self.logb, self.shift, out=self.b)
        _floored_exp(self.b, self.logb)

    def _scale_column(self, j: int) -> bool:
        """Refresh state j's scaled densities; True if the shift must be recomputed."""
        col = self.b[j]
        np.subtract(self.logb[j], self.shift, out=col)
        _floored_exp(col, self.logb[j])
        return bool(col.max() > _HIGH or col[self.anchored[j]].min(initial=np.inf) < _LOW)

    def _forward(self, k: int) -> None:
        kern.frame_logliks_into(self.b, self.t.offsets, self.tpms[k], self.pinit[k],
                                self.shift_sums, self.frame_ll[k])

    def _finish(self) -> float:
        ll = kern.outer_loglik(self.frame_ll, self.itpm, self.iinit)
        self.loglik = ll
        lp = self.prior.sum()
        e = -ll - lp
        self.energy = e if math.isfinite(e) else math.inf
        return self.energy

    # -- incremental proposals -------------------------------------------
    def _save(self, name: str, index=None) -> None:
        arr = getattr(self, name)
        if index is None:
            self._undo.append((name, None, arr.copy() if isinstance(arr, np.ndarray) else arr))
        else:
            self._undo.append((name, index, arr[index].copy()))

    def propose(self, new_values, changed) -> float:
        s = self.t.schema
        self._undo = []
        self._save("values")
        self._save("prior")
        self._save("energy")
        self._save("loglik")
        new_values = np.asarray(new_values, dtype=float)
        params = s.params
        if not self.valid:
            # fall back to a full evaluation from an invalid state
            old = self.values.copy()
            e = self.reset(new_values)
            self._undo = [("__full__", None, old)]
            return e
        for i in changed:
            lp = prior_term(params[i], float(new_values[i]), self.t.priors)
            if lp == -math.inf:
                self.energy = math.inf
                return self.energy
        self.values = new_values.copy()
        for i in changed:
            self.prior[i] = prior_term(params[i], float(new_values[i]), self.t.priors)

        parts, prod_k, internal = set(), set(), False
        for i in changed:
            p = params[i]
            if p.role in ("mean", "sd", "zero_mass"):
                parts.add((p.covariate, p.state))
            elif p.role in ("prod_tpm", "prod_init"):
                prod_k.add(p.k)
            else:
                internal = True

        if parts:
            self._save("emis")
            for i in changed:
                p = params[i]
                if p.role == "mean":
                    self.emis[p.state, 2 * p.covariate] = new_values[i]
                elif p.role == "sd":
                    self.emis[p.state, 2 * p.covariate + 1] = new_values[i]
                elif p.role == "zero_mass":
                    self.emis[p.state, 6] = new_values[i]
            states = sorted({j for _, j in parts})
            for c, j in sorted(parts):
                self._save("parts", (c, j))
                self._write_part(c, j)
            rescale = False
            for j in states:
                self._save("logb", j)
                self._save("b", j)
                self.logb[j] = self.parts[0, j] + self.parts[1, j] + self.parts[2, j]
                rescale |= self._scale_column(j)
            if rescale:
                self._save("shift")
                self._save("shift_sums")
                self._save("anchored")
                self._save("b")
                self._rescale_all()
            self._save("frame_ll")
            for k in range(s.K):
                self._forward(k)

        for k in sorted(prod_k):
            self._save("tpms", k)
            self._save("pinit", k)
            self._update_prod(k, new_values)
            if self.pinit[k] is None or not np.all(np.isfinite(self.pinit[k])):
                self.energy = math.inf
                return self.energy
            self._save("frame_ll", k)
            self._forward(k)

        if internal:
            self._save("itpm")
            self._save("iinit")
            ok = self._update_internal(new_values)
            if not ok:
                self.energy = math.inf
                return self.energy
        return self._finish()

    def _update_prod(self, k: int, v) -> None:
        s = self.t.schema
        for i, p in enumerate(s.params):
            if p.k != k:
                continue
            if p.role == "prod_tpm":
                self.tpms[k, p.state, p.col] = v[i]
            elif p.role == "prod_init":
                self.pinit[k, p.col] = v[i]
        if s.tpm_estimation:
            for r in range(s.N):
                row = simplex_complete(self.tpms[k, r, :-1])
                if row is None:
                    self.pinit[k] = np.nan
                    return
                self.tpms[k, r] = row
        if s.init_mode == "derived":
            pi = _stationary_or_none(self.tpms[k])
            self.pinit[k] = np.nan if pi is None else pi
        else:
            row = simplex_complete(self.pinit[k, :-1])
            self.pinit[k] = np.nan if row is None else row

    def _update_internal(self, v) -> bool:
        s = self.t.schema
        for i, p in enumerate(s.params):
            if p.role == "internal_tpm":
                self.itpm[p.state, p.col] = v[i]
            elif p.role == "internal_init":
                self.iinit[p.col] = v[i]
        for r in range(s.K):
            row = simplex_complete(self.itpm[r, :-1])
            if row is None:
                return False
            self.itpm[r] = row
        if s.init_mode == "derived":
            pi = _stationary_or_none(self.itpm)
            if pi is None:
                return False
            self.iinit = pi
        else:
            row = simplex_complete(self.iinit[:-1])
            if row is None:
                return False
            self.iinit = row
        return True

    def accept(self) -> None:
        self._undo = []

    def reject(self) -> None:
        for name, index, saved in reversed(self._undo):
            if name == "__full__":
                self.reset(saved)
                return
            if index is None:
                setattr(self, name, saved)
            else:
                getattr(self, name)[index] = saved
        self._undo = []


def build_schedule(schema: ParameterSchema, mode: str) -> UpdateSchedule:
    """Blocks for the three update schemes; simplex rows always move as one block."""
    names = schema.names
    blocks: list[Block] = []

    def group(role, c):
        idx = tuple(schema.indices(role, c))
        return Block(f"{COVARIATES[c]}_{role}s", idx)

    if mode == "single":
        for i, p in enumerate(schema.params):
            if p.role in ("mean", "sd", "zero_mass"):
                blocks.append(Block(names[i], (i,)))
    elif mode == "block_by_variable":
        for c in range(3):
            blocks.append(group("mean", c))
            blocks.append(group("sd", c))
        blocks.append(Block("zero_masses", tuple(schema.indices("zero_mass"))))
    elif mode == "block_by_parameter":
        for role in ("mean", "sd"):
            for c in range(3):
                blocks.append(group(role, c))
        blocks.append(Block("zero_masses", tuple(schema.indices("zero_mass"))))
    else:
        raise ConfigurationError(f"unknown schedule mode {mode!r}")
    for label, idx in schema.simplex_groups():
        blocks.append(Block(label, tuple(idx), kind="simplex"))
    sched = UpdateSchedule(mode, tuple(blocks))
    sched.validate(len(schema))
    return sched


def round_probabilities(row: np.ndarray, floor: float = 0.01) -> np.ndarray:
    """Round a probability vector to one decimal, keep entries >= floor, renormalise."""
    r = np.maximum(np.round(np.asarray(row, dtype=float), 1), floor)
    return r / r.sum()


def rounded_start(model: HierarchicalModel, schema: ParameterSchema) -> np.ndarray:
    """Starting values: the model's parameters rounded to one decimal place.

    Probabilities that would round to 0 or 1 are kept at least 0.01 away from
    the boundary; t.p.m. rows are renormalised after rounding.
    """
    theta = theta_from_model(model, schema).values.copy()
    out = theta.copy()
    for i, p in enumerate(schema.params):
        if p.role in ("mean", "sd"):
            out[i] = max(round(theta[i], 1), 0.1)
        elif p.role == "zero_mass":
            out[i] = min(max(round(theta[i], 1), 0.01), 0.99)
    for k, g in enumerate(model.production_tpms):
        for r in range(schema.N):
            row = round_probabilities(g.entries[r])
            for i, p in enumerate(schema.params):
                if p.role == "prod_tpm" and p.k == k and p.state == r:
                    out[i] = row[p.col]
    for r in range(schema.K):
        row = round_probabilities(model.internal_tpm.entries[r])
        for i, p in enumerate(schema.params):
            if p.role == "internal_tpm" and p.state == r:
                out[i] = row[p.col]
    for i, p in enumerate(schema.params):
        if p.role == "prod_init":
            out[i] = round_probabilities(model.production_inits[p.k])[p.col]
        elif p.role == "internal_init":
            out[i] = round_probabilities(model.internal_init)[p.col]
    return out


def default_scales(theta0, schema: ParameterSchema, table1: bool = False) -> np.ndarray:
    """0.1 |x| + 0.01 per entry, or the reference tuned scales for the 3-state model."""
    theta0 = np.asarray(theta0, dtype=float)
    scales = 0.1 * np.abs(theta0) + 0.01
    if table1:
        if schema.N != 3:
            raise ConfigurationError("table1_defaults proposal scales exist only for three production states")
        for i, p in enumerate(schema.params):
            if p.role == "mean":
                scales[i] = TABLE1_DELTAS[COVARIATES[p.covariate]][p.state][0]
            elif p.role == "sd":
                scales[i] = TABLE1_DELTAS[COVARIATES[p.covariate]][p.state][1]
            elif p.role == "zero_mass":
                scales[i] = TABLE1_DELTAS["zero_mass"][p.state]
    return scales
