"""Experiment configuration: a YAML file validated by pydantic models.

Grammar (every block optional, defaults shown)::

    seed: 1
    output: out
    model:
      N: 3
      K: 2
      init_mode: derived          # derived | free
      preset: table2_bayes        # table2_bayes | table2_mle
      emissions: null             # list of {duration: {mean, sd}, max_depth: ..., wiggliness: ..., zero_mass}
      internal_tpm: [[0.95, 0.05], [0.05, 0.95]]
      production_tpms: null       # K matrices; default diagonal 0.9 / 0.6
      internal_init: null         # required when init_mode is free
      production_inits: null
    simulation: {M: 50, T: 60, seed: null}      # seed defaults to the master seed
    priors:
      mean: {location: 4.605170185988092, scale: 1.0}
      sd: {shape: 0.001, scale: 0.001}
      zero_mass: {a: 1.0, b: 1.0}
      tpm_entry: {a: 0.5, b: 0.5}
    sampler:
      mode: single                # single | block_by_variable | block_by_parameter | pt
      inner_mode: single          # within-chain schedule when mode is pt
      iterations: 10000
      burn_in: 6000
      tune_every: 100
      initial: truth_rounded_1dp  # or {parameter_name: value}
      initial_scales: default     # default | auto | table1_defaults | {parameter_name: value}
                                  # default: table1_defaults when N = 3, else auto (0.1 |x| + 0.01)
      tpm_estimation: false
    tempering:
      ladder: [1.0, 0.75, 0.5, 0.25]   # or {J: 4, beta_min: 0.25}
      cycle_length: 100
      num_cycles: 160
      workers: 1
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path
from typing import Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .energy import Beta, InvGamma, LogNormal, PriorConfig
from .model import (
    PRESETS,
    EmissionParams,
    GammaParams,
    HierarchicalModel,
    StateEmission,
    TransitionMatrix,
    diagonal_tpm,
    emissions_from_table,
)
from .tempering import Ladder, SwapSchedule, ladder_evenly_spaced


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GammaBlock(_Strict):
    mean: float = Field(gt=0)
    sd: float = Field(gt=0)


class StateBlock(_Strict):
    duration: GammaBlock
    max_depth: GammaBlock
    wiggliness: GammaBlock
    zero_mass: float = Field(ge=0, le=1)


class ModelBlock(_Strict):
    N: int = Field(3, ge=1)
    K: int = Field(2, ge=1)
    init_mode: Literal["derived", "free"] = "derived"
    preset: Literal["table2_bayes", "table2_mle"] = "table2_bayes"
    emissions: list[StateBlock] | None = None
    internal_tpm: list[list[float]] | None = None
    production_tpms: list[list[list[float]]] | None = None
    internal_init: list[float] | None = None
    production_inits: list[list[float]] | None = None

    @model_validator(mode="after")
    def _dimensions(self):
        if self.emissions is None and self.N != 3:
            raise ValueError("the emission presets have three states; give explicit emissions for N != 3")
        if self.emissions is not None and len(self.emissions) != self.N:
            raise ValueError(f"expected {self.N} emission states, got {len(self.emissions)}")
        if self.production_tpms is not None and len(self.production_tpms) != self.K:
            raise ValueError(f"expected {self.K} production t.p.m.s")
        if self.init_mode == "free" and (self.internal_init is None or self.production_inits is None):
            raise ValueError("init_mode 'free' needs internal_init and production_inits")
        return self

    def build(self) -> HierarchicalModel:
        if self.emissions is None:
            emissions = emissions_from_table(PRESETS[self.preset])
        else:
            emissions = EmissionParams(tuple(
                StateEmission(GammaParams(s.duration.mean, s.duration.sd),
                              GammaParams(s.max_depth.mean, s.max_depth.sd),
                              GammaParams(s.wiggliness.mean, s.wiggliness.sd),
                              s.zero_mass)
                for s in self.emissions
            ))
        if self.internal_tpm is not None:
            internal = TransitionMatrix(self.internal_tpm)
        elif self.K == 2:
            internal = TransitionMatrix([[0.95, 0.05], [0.05, 0.95]])
        else:
            internal = diagonal_tpm(self.K, 0.95)
        if self.production_tpms is not None:
            prod = tuple(TransitionMatrix(g) for g in self.production_tpms)
        else:
            diags = np.linspace(0.9, 0.6, self.K) if self.K > 1 else [0.9]
            prod = tuple(diagonal_tpm(self.N, float(d)) for d in diags)
        return HierarchicalModel(
            internal_tpm=internal,
            production_tpms=prod,
            emissions=emissions,
            internal_init=self.internal_init,
            production_inits=None if self.production_inits is None else tuple(self.production_inits),
            init_mode=self.init_mode,
        )


class SimulationBlock(_Strict):
    M: int = Field(50, ge=1)
    T: Union[int, list[int]] = 60
    seed: int | None = None

    @field_validator("T")
    @classmethod
    def _positive(cls, v):
        if isinstance(v, int):
            if v < 1:
                raise ValueError("T must be at least 1")
        elif not v or min(v) < 1:
            raise ValueError("frame lengths must be at least 1")
        return v


class LogNormalBlock(_Strict):
    location: float = math.log(100.0)
    scale: float = Field(1.0, gt=0)


class InvGammaBlock(_Strict):
    shape: float = Field(1e-3, gt=0)
    scale: float = Field(1e-3, gt=0)


class BetaBlock(_Strict):
    a: float = Field(1.0, gt=0)
    b: float = Field(1.0, gt=0)


class PriorsBlock(_Strict):
    mean: LogNormalBlock = LogNormalBlock()
    sd: InvGammaBlock = InvGammaBlock()
    zero_mass: BetaBlock = BetaBlock()
    tpm_entry: BetaBlock = BetaBlock(a=0.5, b=0.5)

    def build(self) -> PriorConfig:
        return PriorConfig(
            mean_prior=LogNormal(self.mean.location, self.mean.scale),
            sd_prior=InvGamma(self.sd.shape, self.sd.scale),
            zero_mass_prior=Beta(self.zero_mass.a, self.zero_mass.b),
            tpm_entry_prior=Beta(self.tpm_entry.a, self.tpm_entry.b),
        )


class SamplerBlock(_Strict):
    mode: Literal["single", "block_by_variable", "block_by_parameter", "pt"] = "single"
    inner_mode: Literal["single", "block_by_variable", "block_by_parameter"] = "single"
    iterations: int = Field(10000, ge=1)
    burn_in: int = Field(6000, ge=0)
    tune_every: int = Field(100, ge=0)
    initial: Union[Literal["truth_rounded_1dp"], dict[str, float]] = "truth_rounded_1dp"
    initial_scales: Union[Literal["default", "auto", "table1_defaults"], dict[str, float]] = "default"
    tpm_estimation: bool = False


class LadderRange(_Strict):
    J: int = Field(ge=2)
    beta_min: float = Field(gt=0, lt=1)


class TemperingBlock(_Strict):
    ladder: Union[list[float], LadderRange] = [1.0, 0.75, 0.5, 0.25]
    cycle_length: int = Field(100, ge=1)
    num_cycles: int = Field(160, ge=1)
    workers: int = Field(1, ge=1)

    def build_ladder(self) -> Ladder:
        if isinstance(self.ladder, LadderRange):
            return ladder_evenly_spaced(self.ladder.J, self.ladder.beta_min)
        return Ladder(tuple(self.ladder))

    def build_swaps(self) -> SwapSchedule:
        return SwapSchedule(self.cycle_length, self.num_cycles)


class ExperimentConfig(_Strict):
    seed: int = 1
    output: str = "out"
    model: ModelBlock = ModelBlock()
    simulation: SimulationBlock = SimulationBlock()
    priors: PriorsBlock = PriorsBlock()
    sampler: SamplerBlock = SamplerBlock()
    tempering: TemperingBlock = TemperingBlock()

    @model_validator(mode="after")
    def _consistent(self):
        s = self.sampler
        if s.mode == "pt":
            total = self.tempering.cycle_length * self.tempering.num_cycles
            if s.burn_in >= total:
                raise ValueError("burn_in must be smaller than cycle_length * num_cycles")
        elif s.burn_in >= s.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        self.tempering.build_ladder()  # surface ladder errors at load time
        if isinstance(self.simulation.T, list) and len(self.simulation.T) != self.simulation.M:
            raise ValueError("per-frame T list must have M entries")
        return self

    @property
    def total_sweeps(self) -> int:
        if self.sampler.mode == "pt":
            return self.tempering.cycle_length * self.tempering.num_cycles
        return self.sampler.iterations

    @property
    def simulation_seed(self) -> int:
        return self.seed if self.simulation.seed is None else self.simulation.seed


def load_config(path: str | Path) -> tuple[ExperimentConfig, str]:
    """Parse a YAML config; returns the config and the sha256 of the file bytes."""
    raw = Path(path).read_bytes()
    data = yaml.safe_load(raw) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping at top level")
    return ExperimentConfig.model_validate(data), hashlib.sha256(raw).hexdigest()


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form, for configs that never touched disk."""
    return hashlib.sha256(cfg.model_dump_json().encode()).hexdigest()
