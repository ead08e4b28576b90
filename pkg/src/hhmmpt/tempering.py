"""Parallel tempering: temperature ladders, cycles and replica swaps.

Chain j runs at inverse temperature ``betas[j]`` and owns its random stream,
proposal scales and tuning tallies. At each barrier, neighbouring pairs are
visited from the coldest pair downwards and an accepted swap moves the
parameter vector (with its cached energy) between the two rungs.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import Trace
from .samplers import (
    TUNE_EVERY,
    ChainState,
    ConfigurationError,
    Target,
    TraceRecorder,
    UpdateSchedule,
    advance,
    chain_rng,
    finish_trace,
    new_chain,
    swap_rng,
)


@dataclass(frozen=True)
class Ladder:
    betas: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.betas)
        if not b or b[0] != 1.0:
            raise ConfigurationError("a ladder starts at beta = 1")
        if any(not 0.0 < x <= 1.0 for x in b):
            raise ConfigurationError("inverse temperatures must lie in (0, 1]")
        if any(nxt >= prev for prev, nxt in zip(b[:-1], b[1:])):
            raise ConfigurationError("ladder must be strictly decreasing")
        object.__setattr__(self, "betas", b)

    def __len__(self) -> int:
        return len(self.betas)


def ladder_evenly_spaced(J: int, beta_min: float) -> Ladder:
    if J < 2 or not 0.0 < beta_min < 1.0:
        raise ConfigurationError("need J >= 2 and 0 < beta_min < 1")
    return Ladder(tuple(np.linspace(1.0, beta_min, J)))


@dataclass(frozen=True)
class SwapSchedule:
    cycle_length: int
    num_cycles: int

    def __post_init__(self):
        if self.cycle_length < 1 or self.num_cycles < 1:
            raise ConfigurationError("cycle_length and num_cycles must be at least 1")

    @property
    def total_sweeps(self) -> int:
        return self.cycle_length * self.num_cycles


@dataclass(frozen=True)
class SwapRecord:
    cycle: int
    pair: tuple[int, int]  # (j-1, j), 0-based rung indices
    delta_e: float
    delta_beta: float
    probability: float
    accepted: bool


def swap_probability(e_j: float, e_jm1: float, beta_j: float, beta_jm1: float) -> float:
    """min(1, exp(-(beta_j - beta_jm1) (E_j - E_jm1))); a non-positive product gives 1."""
    with np.errstate(invalid="ignore"):
        x = (beta_j - beta_jm1) * (e_j - e_jm1)
    # nan arises only when both energies are infinite, where the swap is a no-op
    if not x > 0.0:
        return 1.0
    return math.exp(-x)


@dataclass
class PTResult:
    trace: Trace
    swaps: list[SwapRecord]
    chain_traces: list[Trace] = field(default_factory=list)

    def swap_acceptance(self) -> list[float]:
        """Accepted fraction per neighbouring pair, coldest pair first."""
        J = len(self.chain_traces)
        out = []
        for j in range(1, J):
            recs = [s.accepted for s in self.swaps if s.pair == (j - 1, j)]
            out.append(float(np.mean(recs)) if recs else float("nan"))
        return out


def _swap_sweep(chains: list[ChainState], rng: np.random.Generator, cycle: int) -> list[SwapRecord]:
    records = []
    for j in range(1, len(chains)):
        cold, hot = chains[j - 1], chains[j]
        de = hot.energy - cold.energy if not (math.isinf(hot.energy) and math.isinf(cold.energy)) else math.nan
        db = hot.beta - cold.beta
        p = swap_probability(hot.energy, cold.energy, hot.beta, cold.beta)
        u = rng.random()
        accepted = u < p
        if accepted:
            cold.evaluator, hot.evaluator = hot.evaluator, cold.evaluator
        records.append(SwapRecord(cycle, (j - 1, j), de, db, p, accepted))
    return records


def run_parallel_tempering(target: Target, schedule: UpdateSchedule, ladder: Ladder, swaps: SwapSchedule,
                           burn_in: int, seed: int, theta0, scales0, tune_every: int = TUNE_EVERY,
                           executor: Executor | None = None) -> PTResult:
    """Run every rung for ``swaps.total_sweeps`` sweeps with a swap sweep after each cycle.

    All chains start from ``theta0`` with ``scales0``. Passing an executor
    advances the chains concurrently within a cycle; results are identical
    to the serial run.
    """
    total = swaps.total_sweeps
    if not total > burn_in >= 0:
        raise ConfigurationError("need cycle_length * num_cycles > burn_in >= 0")
    schedule.validate(len(target.names))
    chains = [new_chain(target, theta0, scales0, b, chain_rng(seed, j)) for j, b in enumerate(ladder.betas)]
    recorders = [TraceRecorder(total, len(target.names)) for _ in chains]
    srng = swap_rng(seed)
    records: list[SwapRecord] = []

    def run_cycle(j: int) -> None:
        advance(chains[j], schedule, swaps.cycle_length, burn_in, recorders[j], tune_every)

    for cycle in range(swaps.num_cycles):
        if executor is None:
            for j in range(len(chains)):
                run_cycle(j)
        else:
            list(executor.map(run_cycle, range(len(chains))))
        if len(chains) > 1:
            records.extend(_swap_sweep(chains, srng, cycle + 1))

    base = {"mode": "pt", "seed": seed, "betas": list(ladder.betas),
            "cycle_length": swaps.cycle_length, "num_cycles": swaps.num_cycles, "inner_mode": schedule.mode}
    traces = [finish_trace(rec, ch, target, burn_in, {**base, "beta": ch.beta})
              for rec, ch in zip(recorders, chains)]
    return PTResult(trace=traces[0], swaps=records, chain_traces=traces)
