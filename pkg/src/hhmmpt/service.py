"""HTTP service around the core package.

Fits can run for minutes, so POST /fit queues a job and returns 202; poll
GET /jobs/{job_id} for the result. The other endpoints answer inline.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, ConfigDict, Field

from .config import ExperimentConfig
from .diagnostics import DiagnosticError, Trace
from .likelihood import DataSet, hierarchical_loglik
from .model import DomainError
from .samplers import ConfigurationError
from .tempering import SwapRecord
from . import __version__, workflows


# -- payloads ---------------------------------------------------------------

class Wire(BaseModel):
    """Base for request/response bodies; non-finite floats travel as "Infinity"/"NaN" strings."""

    model_config = ConfigDict(ser_json_inf_nan="strings")


class DataPayload(Wire):
    """Dives grouped by frame; each dive is (duration, max_depth, wiggliness)."""

    frames: list[list[tuple[float, float, float]]] = Field(min_length=1)

    def to_dataset(self) -> DataSet:
        if any(len(f) == 0 for f in self.frames):
            raise DomainError("every frame needs at least one dive")
        obs = np.array([d for f in self.frames for d in f], dtype=float)
        offsets = np.concatenate([[0], np.cumsum([len(f) for f in self.frames])]).astype(np.int64)
        return DataSet.from_arrays(obs, offsets)

    @classmethod
    def from_arrays(cls, obs: np.ndarray, offsets: np.ndarray) -> "DataPayload":
        return cls(frames=[[tuple(r) for r in obs[a:b].tolist()] for a, b in zip(offsets[:-1], offsets[1:])])


class TracePayload(Wire):
    names: list[str]
    values: list[list[float]]
    energies: list[float]
    burn_in: int = 0
    accepts: list[int] | None = None
    proposals: list[int] | None = None
    scales: list[float] | None = None

    @classmethod
    def from_trace(cls, t: Trace) -> "TracePayload":
        return cls(
            names=list(t.names),
            values=t.values.tolist(),
            energies=t.energies.tolist(),
            burn_in=t.burn_in,
            accepts=None if t.accepts is None else t.accepts.tolist(),
            proposals=None if t.proposals is None else t.proposals.tolist(),
            scales=None if t.scales is None else t.scales.tolist(),
        )

    def to_trace(self) -> Trace:
        values = np.array(self.values, dtype=float).reshape(len(self.energies), len(self.names))
        return Trace(
            names=list(self.names),
            values=values,
            energies=np.array(self.energies, dtype=float),
            burn_in=self.burn_in,
            accepts=None if self.accepts is None else np.array(self.accepts, dtype=np.int64),
            proposals=None if self.proposals is None else np.array(self.proposals, dtype=np.int64),
            scales=None if self.scales is None else np.array(self.scales, dtype=float),
        )


class SwapPayload(Wire):
    cycle: int
    pair: tuple[int, int]
    delta_e: float
    delta_beta: float
    probability: float
    accepted: bool

    @classmethod
    def from_record(cls, r: SwapRecord) -> "SwapPayload":
        return cls(cycle=r.cycle, pair=r.pair, delta_e=r.delta_e, delta_beta=r.delta_beta,
                   probability=r.probability, accepted=r.accepted)

    def to_record(self) -> SwapRecord:
        return SwapRecord(self.cycle, tuple(self.pair), self.delta_e, self.delta_beta, self.probability,
                          self.accepted)


class LoglikRequest(Wire):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    data: DataPayload


class LoglikResponse(Wire):
    loglik: float


class SimulateRequest(Wire):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    seed: int | None = None


class SimulateResponse(Wire):
    seed: int
    data: DataPayload
    internal_states: list[int]  # 1-based
    production_states: list[list[int]]


class FitRequest(Wire):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    data: DataPayload | None = None  # None: fit a fresh simulation from the config
    seed: int | None = None


class FitResult(Wire):
    seed: int
    trace: TracePayload
    swaps: list[SwapPayload] | None = None
    chain_traces: list[TracePayload] | None = None


class JobStatus(Wire):
    job_id: str
    status: Literal["queued", "running", "done", "failed"]
    error: str | None = None
    result: FitResult | None = None


class DiagnoseRequest(Wire):
    trace: TracePayload
    max_lag: int = Field(workflows.ACF_MAX_LAG, ge=1)


class SummaryRow(Wire):
    mean: float
    sd: float
    p2: float
    p50: float
    p98: float


class DiagnoseResponse(Wire):
    summaries: dict[str, SummaryRow]
    acf: dict[str, list[float]]
    ess: dict[str, float]
    n: int
    warnings: list[str]


# -- jobs -------------------------------------------------------------------

class JobStore:
    def __init__(self, workers: int = 1):
        self._pool = ThreadPoolExecutor(workers)
        self._jobs: dict[str, JobStatus] = {}
        self._lock = threading.Lock()

    def submit(self, fn, *args) -> JobStatus:
        job = JobStatus(job_id=uuid.uuid4().hex, status="queued")
        with self._lock:
            self._jobs[job.job_id] = job
        self._pool.submit(self._run, job.job_id, fn, *args)
        return job

    def _set(self, job_id: str, **fields) -> None:
        with self._lock:
            self._jobs[job_id] = self._jobs[job_id].model_copy(update=fields)

    def _run(self, job_id: str, fn, *args) -> None:
        self._set(job_id, status="running")
        try:
            result = fn(*args)
        except Exception as err:  # reported through the job status
            self._set(job_id, status="failed", error=f"{type(err).__name__}: {err}")
        else:
            self._set(job_id, status="done", result=result)

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)


def _run_fit(req: FitRequest) -> FitResult:
    cfg = req.config
    seed = cfg.seed if req.seed is None else req.seed
    data = workflows.simulate_from_config(cfg).data if req.data is None else req.data.to_dataset()
    res = workflows.fit(cfg, data, seed)
    if res.pt is None:
        return FitResult(seed=seed, trace=TracePayload.from_trace(res.trace))
    return FitResult(
        seed=seed,
        trace=TracePayload.from_trace(res.trace),
        swaps=[SwapPayload.from_record(r) for r in res.pt.swaps],
        chain_traces=[TracePayload.from_trace(t) for t in res.pt.chain_traces],
    )


def _json(body: Wire, status_code: int = 200) -> Response:
    # serialise with pydantic so infinite energies survive; the stdlib encoder rejects them
    return Response(body.model_dump_json(), status_code=status_code, media_type="application/json")


def create_app(workers: int = 1) -> FastAPI:
    app = FastAPI(title="hhmmpt", version=__version__)
    jobs = JobStore(workers)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/loglik", response_model=LoglikResponse)
    def loglik(req: LoglikRequest):
        try:
            ll = hierarchical_loglik(req.data.to_dataset(), req.config.model.build())
        except (DomainError, ValueError) as err:
            raise HTTPException(422, str(err)) from None
        return _json(LoglikResponse(loglik=ll))

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        seed = req.config.simulation_seed if req.seed is None else req.seed
        try:
            sim = workflows.simulate_from_config(req.config, seed)
        except (DomainError, ValueError) as err:
            raise HTTPException(422, str(err)) from None
        return _json(SimulateResponse(
            seed=seed,
            data=DataPayload.from_arrays(sim.observations, sim.offsets),
            internal_states=(sim.internal_states + 1).tolist(),
            production_states=[(p + 1).tolist() for p in sim.production_states_by_frame()],
        ))

    @app.post("/fit", response_model=JobStatus, status_code=202)
    def fit(req: FitRequest):
        # fail fast on bad data or start values instead of inside the job
        if req.data is not None:
            try:
                workflows.fit_setup(req.config, req.data.to_dataset())
            except (DomainError, ConfigurationError, ValueError) as err:
                raise HTTPException(422, str(err)) from None
        return _json(jobs.submit(_run_fit, req), 202)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job(job_id: str):
        status = jobs.get(job_id)
        if status is None:
            raise HTTPException(404, f"no job {job_id}")
        return _json(status)

    @app.post("/diagnose", response_model=DiagnoseResponse)
    def diagnose(req: DiagnoseRequest):
        try:
            trace = req.trace.to_trace()
            d = workflows.diagnose(trace, req.max_lag)
        except (DiagnosticError, ValueError) as err:
            raise HTTPException(422, str(err)) from None
        return _json(DiagnoseResponse(
            summaries={k: SummaryRow(**vars(s)) for k, s in d.summaries.items()},
            acf={k: v.tolist() for k, v in d.acfs.items()},
            ess={k: e for k, (e, _) in d.ess.items()},
            n=len(trace) - trace.burn_in,
            warnings=d.warnings,
        ))

    return app


app = create_app()
