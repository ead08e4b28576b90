"""Random-walk Metropolis-Hastings kernels and burn-in pilot tuning.

A *target* supplies parameter names, an update schedule and an evaluator
that caches whatever it needs to price proposals. The kernels only see the
evaluator's ``propose`` / ``accept`` / ``reject`` cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .diagnostics import Trace
from .model import simplex_complete

SCHEDULE_MODES = ("single", "block_by_variable", "block_by_parameter")

TARGET_LOW = 0.25
TARGET_HIGH = 0.40
GROW = 1.1
SHRINK = 0.9
TUNE_EVERY = 100

# spawn-key prefixes for the per-chain and swap random streams
CHAIN_STREAM = 0
SWAP_STREAM = 1


class ConfigurationError(ValueError):
    pass


def chain_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(CHAIN_STREAM, index)))


def swap_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(SWAP_STREAM,)))


class Evaluator(Protocol):
    values: np.ndarray
    energy: float

    def propose(self, new_values: np.ndarray, changed: np.ndarray) -> float: ...
    def accept(self) -> None: ...
    def reject(self) -> None: ...
    def reset(self, values: np.ndarray) -> float: ...


class Target(Protocol):
    names: list[str]

    def evaluator(self, values) -> Evaluator: ...
    def energy(self, values) -> float: ...
    def schedule(self, mode: str) -> "UpdateSchedule": ...


@dataclass(frozen=True)
class Block:
    name: str
    indices: tuple[int, ...]
    kind: str = "rw"  # "rw" or "simplex"


@dataclass(frozen=True)
class UpdateSchedule:
    mode: str
    blocks: tuple[Block, ...]

    def validate(self, n_params: int) -> None:
        seen = [i for b in self.blocks for i in b.indices]
        if any(len(b.indices) == 0 for b in self.blocks):
            raise ConfigurationError("empty block in schedule")
        if sorted(seen) != list(range(n_params)):
            missing = sorted(set(range(n_params)) - set(seen))
            dup = sorted({i for i in seen if seen.count(i) > 1})
            raise ConfigurationError(f"schedule must cover every parameter once (missing {missing}, duplicated {dup})")


@dataclass
class ChainState:
    evaluator: Evaluator
    beta: float
    scales: np.ndarray
    rng: np.random.Generator
    accepts: np.ndarray = None
    proposals: np.ndarray = None
    window_accepts: np.ndarray = None
    window_proposals: np.ndarray = None
    sweep: int = 0
    frozen: bool = False
    last_window: tuple | None = None

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ConfigurationError(f"inverse temperature must lie in (0, 1], got {self.beta}")
        self.scales = np.array(self.scales, dtype=float)
        if np.any(self.scales <= 0):
            raise ConfigurationError("proposal scales must be positive")
        n = self.scales.shape[0]
        for name in ("accepts", "proposals", "window_accepts", "window_proposals"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.int64))

    @property
    def theta(self) -> np.ndarray:
        return self.evaluator.values

    @property
    def energy(self) -> float:
        return self.evaluator.energy


def acceptance_probability(delta_e: float, beta: float = 1.0) -> float:
    """min(1, exp(-beta * delta_e)), with +inf/nan energy differences rejected."""
    if delta_e <= 0.0:
        return 1.0
    if not delta_e < math.inf:
        return 0.0
    return min(1.0, math.exp(-beta * delta_e))


def _tally(chain: ChainState, idx, accepted: bool) -> None:
    chain.proposals[idx] += 1
    chain.window_proposals[idx] += 1
    if accepted:
        chain.accepts[idx] += 1
        chain.window_accepts[idx] += 1


def _metropolis(chain: ChainState, proposal: np.ndarray | None, idx) -> bool:
    u = chain.rng.random()
    if proposal is None:
        _tally(chain, idx, False)
        return False
    ev = chain.evaluator
    current = ev.energy
    new = ev.propose(proposal, idx)
    delta = new - current if math.isfinite(current) else (-math.inf if math.isfinite(new) else math.nan)
    accepted = u < acceptance_probability(delta, chain.beta)
    if accepted:
        ev.accept()
    else:
        ev.reject()
    _tally(chain, idx, accepted)
    return accepted


def mh_step(chain: ChainState, block: Sequence[int]) -> bool:
    """Gaussian random-walk move on the entries of ``block``; returns acceptance."""
    idx = np.asarray(block, dtype=np.intp)
    proposal = chain.theta.copy()
    proposal[idx] += chain.scales[idx] * chain.rng.standard_normal(idx.shape[0])
    return _metropolis(chain, proposal, idx)


def simplex_row_step(chain: ChainState, row: Sequence[int]) -> bool:
    """Move the free entries of one probability vector as a single proposal.

    Entries are perturbed in order; any entry leaving (0, 1) or pushing the
    running sum past 1 invalidates the proposal, as does a negative
    completion of the last entry.
    """
    idx = np.asarray(row, dtype=np.intp)
    z = chain.rng.standard_normal(idx.shape[0])
    proposal = chain.theta.copy()
    running = 0.0
    valid = True
    for pos, i in enumerate(idx):
        x = proposal[i] + chain.scales[i] * z[pos]
        running += x
        if not (0.0 < x < 1.0) or running > 1.0:
            valid = False
            break
        proposal[i] = x
    if valid and simplex_complete(proposal[idx]) is None:
        valid = False
    return _metropolis(chain, proposal if valid else None, idx)


def pilot_tune(scales, accepts, proposals, low: float = TARGET_LOW, high: float = TARGET_HIGH,
               grow: float = GROW, shrink: float = SHRINK) -> np.ndarray:
    """Multiply scales by ``grow`` above the band and ``shrink`` below it."""
    scales = np.array(scales, dtype=float)
    accepts = np.asarray(accepts)
    proposals = np.asarray(proposals)
    seen = proposals > 0
    frac = np.where(seen, accepts / np.where(seen, proposals, 1), np.nan)
    scales[seen & (frac > high)] *= grow
    scales[seen & (frac < low)] *= shrink
    return scales


def sweep(chain: ChainState, schedule: UpdateSchedule) -> None:
    for block in schedule.blocks:
        if block.kind == "simplex":
            simplex_row_step(chain, block.indices)
        else:
            mh_step(chain, block.indices)


def advance(chain: ChainState, schedule: UpdateSchedule, n_sweeps: int, burn_in: int,
            record: Callable[[ChainState], None] | None = None, tune_every: int = TUNE_EVERY) -> ChainState:
    """Run ``n_sweeps`` sweeps, tuning on the burn-in cadence and freezing afterwards."""
    for _ in range(n_sweeps):
        sweep(chain, schedule)
        chain.sweep += 1
        if not chain.frozen and tune_every > 0 and chain.sweep % tune_every == 0 and chain.sweep <= burn_in:
            chain.scales = pilot_tune(chain.scales, chain.window_accepts, chain.window_proposals)
            chain.last_window = (chain.window_accepts.copy(), chain.window_proposals.copy())
            chain.window_accepts[:] = 0
            chain.window_proposals[:] = 0
        if chain.sweep == burn_in:
            # post-burn-in tallies start clean; scales are fixed from here
            chain.frozen = True
            chain.accepts[:] = 0
            chain.proposals[:] = 0
        if record is not None:
            record(chain)
    return chain


class TraceRecorder:
    def __init__(self, n_sweeps: int, n_params: int):
        self.values = np.empty((n_sweeps, n_params))
        self.energies = np.empty(n_sweeps)
        self.pos = 0

    def __call__(self, chain: ChainState) -> None:
        self.values[self.pos] = chain.theta
        self.energies[self.pos] = chain.energy
        self.pos += 1


def new_chain(target: Target, theta0, scales0, beta: float, rng: np.random.Generator) -> ChainState:
    ev = target.evaluator(np.array(theta0, dtype=float))
    return ChainState(evaluator=ev, beta=beta, scales=np.array(scales0, dtype=float), rng=rng)


def finish_trace(rec: TraceRecorder, chain: ChainState, target: Target, burn_in: int, meta: dict) -> Trace:
    return Trace(
        names=list(target.names),
        values=rec.values,
        energies=rec.energies,
        burn_in=burn_in,
        accepts=chain.accepts.copy(),
        proposals=chain.proposals.copy(),
        scales=chain.scales.copy(),
        metadata=meta,
    )


def run_sampler(target: Target, schedule: UpdateSchedule, iters: int, burn_in: int, seed: int,
                theta0, scales0, tune_every: int = TUNE_EVERY) -> Trace:
    """Single-chain random-walk MH at beta = 1."""
    if not iters > burn_in >= 0:
        raise ConfigurationError("need iters > burn_in >= 0")
    schedule.validate(len(target.names))
    chain = new_chain(target, theta0, scales0, 1.0, chain_rng(seed, 0))
    rec = TraceRecorder(iters, len(target.names))
    advance(chain, schedule, iters, burn_in, rec, tune_every)
    return finish_trace(rec, chain, target, burn_in, {"mode": schedule.mode, "seed": seed, "betas": [1.0]})


class _FunctionEvaluator:
    def __init__(self, fn, values):
        self.fn = fn
        self.reset(values)

    def reset(self, values) -> float:
        self.values = np.array(values, dtype=float)
        self.energy = float(self.fn(self.values))
        return self.energy

    def propose(self, new_values, changed) -> float:
        self._pending = (np.array(new_values, dtype=float), float(self.fn(new_values)))
        return self._pending[1]

    def accept(self) -> None:
        self.values, self.energy = self._pending

    def reject(self) -> None:
        self._pending = None


@dataclass
class FunctionTarget:
    """Target defined by a plain energy function; every parameter is its own RW block."""

    fn: Callable[[np.ndarray], float]
    names: list[str] = field(default_factory=lambda: ["x"])

    def evaluator(self, values) -> _FunctionEvaluator:
        return _FunctionEvaluator(self.fn, values)

    def energy(self, values) -> float:
        return float(self.fn(np.asarray(values, dtype=float)))

    def schedule(self, mode: str = "single") -> UpdateSchedule:
        if mode == "single":
            blocks = tuple(Block(n, (i,)) for i, n in enumerate(self.names))
        else:
            blocks = (Block("all", tuple(range(len(self.names)))),)
        return UpdateSchedule(mode, blocks)
