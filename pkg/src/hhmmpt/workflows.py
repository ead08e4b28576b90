"""simulate / fit / diagnose as plain functions shared by the CLI and the service."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .diagnostics import DiagnosticError, ParamSummary, Trace, acf, ess, summarize
from .energy import ParameterSchema
from .likelihood import DataSet
from .samplers import ConfigurationError, run_sampler
from .simulator import SimConfig, SimOutput, simulate
from .target import HMMTarget, default_scales, rounded_start
from .tempering import PTResult, SwapRecord, run_parallel_tempering

log = logging.getLogger(__name__)

ACF_MAX_LAG = 100


def simulate_from_config(cfg: ExperimentConfig, seed: int | None = None) -> SimOutput:
    seed = cfg.simulation_seed if seed is None else seed
    return simulate(SimConfig(cfg.model.build(), cfg.simulation.M, cfg.simulation.T, seed))


@dataclass
class FitSetup:
    target: HMMTarget
    theta0: np.ndarray
    scales0: np.ndarray


def fit_setup(cfg: ExperimentConfig, data: DataSet) -> FitSetup:
    model = cfg.model.build()
    schema = ParameterSchema(model.N, model.K, cfg.sampler.tpm_estimation, cfg.model.init_mode)
    target = HMMTarget(data, cfg.priors.build(), schema, model)
    theta0 = rounded_start(model, schema)
    if isinstance(cfg.sampler.initial, dict):
        theta0 = _override(theta0, schema, cfg.sampler.initial, "initial")
    choice = cfg.sampler.initial_scales
    if isinstance(choice, dict):
        scales0 = _override(default_scales(theta0, schema), schema, choice, "initial_scales")
    else:
        table1 = choice == "table1_defaults" or (choice == "default" and schema.N == 3)
        scales0 = default_scales(theta0, schema, table1=table1)
    return FitSetup(target, theta0, scales0)


def _override(base: np.ndarray, schema: ParameterSchema, values: dict[str, float], what: str) -> np.ndarray:
    out = base.copy()
    names = schema.names
    for name, v in values.items():
        if name not in names:
            raise ConfigurationError(f"{what}: unknown parameter {name!r}")
        out[names.index(name)] = v
    return out


@dataclass
class FitResult:
    trace: Trace
    setup: FitSetup
    pt: PTResult | None = None


def fit(cfg: ExperimentConfig, data: DataSet, seed: int | None = None) -> FitResult:
    seed = cfg.seed if seed is None else seed
    setup = fit_setup(cfg, data)
    s = cfg.sampler
    if s.mode == "pt":
        sched = setup.target.schedule(s.inner_mode)
        workers = cfg.tempering.workers
        pool = ThreadPoolExecutor(workers) if workers > 1 else None
        try:
            res = run_parallel_tempering(setup.target, sched, cfg.tempering.build_ladder(),
                                         cfg.tempering.build_swaps(), s.burn_in, seed,
                                         setup.theta0, setup.scales0, s.tune_every, executor=pool)
        finally:
            if pool is not None:
                pool.shutdown()
        return FitResult(res.trace, setup, res)
    sched = setup.target.schedule(s.mode)
    trace = run_sampler(setup.target, sched, s.iterations, s.burn_in, seed,
                        setup.theta0, setup.scales0, s.tune_every)
    return FitResult(trace, setup)


@dataclass
class Diagnosis:
    summaries: dict[str, ParamSummary]
    acfs: dict[str, np.ndarray]
    ess: dict[str, tuple[float, int]]
    warnings: list[str] = field(default_factory=list)


def diagnose(trace: Trace, max_lag: int = ACF_MAX_LAG) -> Diagnosis:
    """Summaries for every column; ACF and ESS for the non-constant ones."""
    summaries = summarize(trace)
    acfs, sizes, warnings = {}, {}, []
    for name, x in trace.post_burn_in().items():
        n = x.shape[0]
        if not np.all(np.isfinite(x)):
            warnings.append(f"{name}: non-finite values, no ACF/ESS")
            continue
        try:
            if n > 1:
                acfs[name] = acf(x, min(max_lag, n - 1))
            sizes[name] = (ess(x), n)
        except DiagnosticError as err:
            warnings.append(f"{name}: {err}")
    return Diagnosis(summaries, acfs, sizes, warnings)


# -- artifact writers -------------------------------------------------------

def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_simulation(out, sim: SimOutput, config_sha256: str, seed: int,
                     overrides: dict | None = None) -> list[Path]:
    out = _out_dir(out)
    files = [io.write_data(out / "data.csv", sim.observations, sim.offsets),
             io.write_truth(out / "truth.csv", sim.offsets, sim.internal_states, sim.production_states)]
    man = io.write_manifest(out / "manifest_simulate.txt", "simulate", config_sha256, seed,
                            overrides or {}, files)
    return files + [man]


def write_fit(out, trace: Trace, config_sha256: str, seed: int, swaps: list[SwapRecord] | None = None,
              chain_traces: list[Trace] | None = None, overrides: dict | None = None,
              inputs: dict | None = None) -> list[Path]:
    out = _out_dir(out)
    files = [io.write_trace(out / "trace.csv", trace),
             io.write_summary(out / "summary.csv", summarize(trace), trace.acceptance())]
    if swaps is not None:
        files.append(io.write_swaps(out / "swaps.csv", swaps))
    for j, ct in enumerate(chain_traces or []):
        files.append(io.write_trace(out / f"trace_rung{j + 1}.csv", ct))
    # PT cost is reported both per chain and summed over rungs
    rungs = len(chain_traces) if chain_traces else 1
    sweeps = {"sweeps_per_chain": len(trace), "rungs": rungs, "total_sweeps": rungs * len(trace)}
    man = io.write_manifest(out / "manifest_fit.txt", "fit", config_sha256, seed, overrides or {}, files,
                            inputs, sweeps)
    return files + [man]


def write_diagnosis(out, d: Diagnosis, config_sha256: str, seed: int, overrides: dict | None = None,
                    inputs: dict | None = None) -> list[Path]:
    out = _out_dir(out)
    files = [io.write_acf(out / "acf.csv", d.acfs),
             io.write_ess(out / "ess.csv", d.ess),
             io.write_summary(out / "diagnostics_summary.csv", d.summaries)]
    man = io.write_manifest(out / "manifest_diagnose.txt", "diagnose", config_sha256, seed,
                            overrides or {}, files, inputs)
    return files + [man]


def simulate_to_dir(cfg: ExperimentConfig, out, config_sha256: str, seed: int | None = None,
                    overrides: dict | None = None) -> list[Path]:
    sim_seed = cfg.simulation_seed if seed is None else seed
    return write_simulation(out, simulate_from_config(cfg, sim_seed), config_sha256, sim_seed, overrides)


def fit_to_dir(cfg: ExperimentConfig, out, config_sha256: str, data_path=None, seed: int | None = None,
               overrides: dict | None = None) -> list[Path]:
    """Fit to the CSV at ``data_path``, or to a fresh simulation from the config when it is None."""
    seed = cfg.seed if seed is None else seed
    if data_path is None:
        data = simulate_from_config(cfg).data
    else:
        data, _, _ = io.read_data(data_path)
    result = fit(cfg, data, seed)
    pt = result.pt
    return write_fit(out, result.trace, config_sha256, seed,
                     swaps=None if pt is None else pt.swaps,
                     chain_traces=None if pt is None else pt.chain_traces,
                     overrides=overrides,
                     inputs={"data": "simulated" if data_path is None else str(data_path)})


def diagnose_to_dir(cfg: ExperimentConfig, trace_path, out, config_sha256: str, seed: int | None = None,
                    overrides: dict | None = None) -> tuple[list[Path], list[str]]:
    trace = io.read_trace(trace_path, burn_in=cfg.sampler.burn_in)
    d = diagnose(trace)
    for w in d.warnings:
        log.warning(w)
    files = write_diagnosis(out, d, config_sha256, cfg.seed if seed is None else seed, overrides,
                            {"trace": str(trace_path)})
    return files, d.warnings
