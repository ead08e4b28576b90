"""hhmmpt simulate|fit|diagnose <config> [--data PATH] [--out DIR] [--seed N] [--server URL]

Without --server everything runs in-process. With --server the computation
happens in a running service (``hhmmpt serve``) and this command only ships
the inputs and writes the returned results to disk, so outputs are
byte-identical either way.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io, workflows
from .config import ExperimentConfig, load_config
from .diagnostics import DiagnosticError, ParamSummary
from .model import DomainError
from .samplers import ConfigurationError
from .simulator import SimOutput

log = logging.getLogger("hhmmpt")

POLL_SECONDS = 0.5


def _overrides(args) -> dict:
    return {k: v for k, v in (("data", args.data), ("out", args.out), ("seed", args.seed)) if v is not None}


def _apply(cfg: ExperimentConfig, args) -> ExperimentConfig:
    update = {}
    if args.out is not None:
        update["output"] = args.out
    if args.seed is not None:
        update["seed"] = args.seed
    return cfg.model_copy(update=update)


# -- remote helpers ---------------------------------------------------------

class _Remote:
    def __init__(self, url: str, timeout: float = 60.0, client=None):
        if client is None:
            import httpx

            client = httpx.Client(base_url=url.rstrip("/"), timeout=timeout)
        self.client = client

    def _check(self, r, path: str):
        if r.status_code >= 400:
            raise RuntimeError(f"server rejected {path}: {r.status_code} {r.text}")
        return r.content

    def post(self, path: str, body, reply):
        r = self.client.post(path, content=body.model_dump_json(), headers={"content-type": "application/json"})
        return reply.model_validate_json(self._check(r, path))

    def get(self, path: str, reply):
        return reply.model_validate_json(self._check(self.client.get(path), path))


def _remote_simulate(remote: _Remote, cfg: ExperimentConfig, seed: int) -> SimOutput:
    from .service import SimulateRequest, SimulateResponse

    resp = remote.post("/simulate", SimulateRequest(config=cfg, seed=seed), SimulateResponse)
    data = resp.data.to_dataset()
    obs, offsets = data.to_arrays()
    prod = np.concatenate([np.asarray(p, dtype=np.int64) - 1 for p in resp.production_states])
    return SimOutput(data, obs, offsets, np.asarray(resp.internal_states, dtype=np.int64) - 1, prod)


def _remote_fit(remote: _Remote, cfg: ExperimentConfig, seed: int, data_path):
    from .service import DataPayload, FitRequest, JobStatus

    req = FitRequest(config=cfg, seed=seed)
    if data_path is not None:
        _, obs, offsets = io.read_data(data_path)
        req.data = DataPayload.from_arrays(obs, offsets)
    job = remote.post("/fit", req, JobStatus)
    while job.status in ("queued", "running"):
        time.sleep(POLL_SECONDS)
        job = remote.get(f"/jobs/{job.job_id}", JobStatus)
    if job.status == "failed":
        raise RuntimeError(f"remote fit failed: {job.error}")
    res = job.result
    swaps = None if res.swaps is None else [s.to_record() for s in res.swaps]
    chains = None if res.chain_traces is None else [t.to_trace() for t in res.chain_traces]
    return res.trace.to_trace(), swaps, chains


def _remote_diagnose(remote: _Remote, trace) -> workflows.Diagnosis:
    from .service import DiagnoseRequest, DiagnoseResponse, TracePayload

    resp = remote.post("/diagnose", DiagnoseRequest(trace=TracePayload.from_trace(trace)), DiagnoseResponse)
    return workflows.Diagnosis(
        summaries={k: ParamSummary(**v.model_dump()) for k, v in resp.summaries.items()},
        acfs={k: np.asarray(v) for k, v in resp.acf.items()},
        ess={k: (e, resp.n) for k, e in resp.ess.items()},
        warnings=resp.warnings,
    )


# -- commands ---------------------------------------------------------------

def cmd_simulate(args, cfg: ExperimentConfig, sha: str) -> list[Path]:
    seed = cfg.simulation_seed if args.seed is None else args.seed
    if args.server:
        sim = _remote_simulate(_Remote(args.server), cfg, seed)
    else:
        sim = workflows.simulate_from_config(cfg, seed)
    return workflows.write_simulation(cfg.output, sim, sha, seed, _overrides(args))


def cmd_fit(args, cfg: ExperimentConfig, sha: str) -> list[Path]:
    if not args.server:
        return workflows.fit_to_dir(cfg, cfg.output, sha, args.data, cfg.seed, _overrides(args))
    trace, swaps, chains = _remote_fit(_Remote(args.server), cfg, cfg.seed, args.data)
    inputs = {"data": "simulated" if args.data is None else str(args.data)}
    return workflows.write_fit(cfg.output, trace, sha, cfg.seed, swaps, chains, _overrides(args), inputs)


def cmd_diagnose(args, cfg: ExperimentConfig, sha: str) -> list[Path]:
    trace_path = args.data or str(Path(cfg.output) / "trace.csv")
    trace = io.read_trace(trace_path, burn_in=cfg.sampler.burn_in)
    if args.server:
        d = _remote_diagnose(_Remote(args.server), trace)
    else:
        d = workflows.diagnose(trace)
    for w in d.warnings:
        log.warning("%s", w)
    return workflows.write_diagnosis(cfg.output, d, sha, cfg.seed, _overrides(args), {"trace": str(trace_path)})


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hhmmpt", description="Simulate, fit and diagnose hierarchical HMMs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "write a synthetic data set"),
                        ("fit", "sample the posterior for a data set"),
                        ("diagnose", "ACF, ESS and summaries of a trace")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("config", help="experiment YAML file")
        c.add_argument("--data", help="data CSV (fit) or trace CSV (diagnose)")
        c.add_argument("--out", help="output directory, overrides the config")
        c.add_argument("--seed", type=int, help="master seed, overrides the config")
        c.add_argument("--server", help="base URL of a running service; compute remotely")
    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("hhmmpt.service:app", host=args.host, port=args.port)
        return 0
    try:
        cfg, sha = load_config(args.config)
        cfg = _apply(cfg, args)
        files = COMMANDS[args.command](args, cfg, sha)
    except (OSError, ValueError, DomainError, ConfigurationError, DiagnosticError, RuntimeError) as err:
        log.error("%s", err)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
