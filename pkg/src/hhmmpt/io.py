"""CSV readers/writers and the key=value run manifest.

Indices in files are 1-based. Floats are written with ``repr`` so a file
read back reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .diagnostics import ParamSummary, Trace
from .likelihood import DataSet
from .model import COVARIATES
from .tempering import SwapRecord

SCHEMA_VERSION = 1

DATA_COLUMNS = ("frame_index", "dive_index") + COVARIATES
TRUTH_COLUMNS = ("frame_index", "dive_index", "internal_state", "production_state")
SUMMARY_COLUMNS = ("parameter", "mean", "sd", "p2", "p50", "p98", "acceptance")
ACF_COLUMNS = ("lag", "parameter", "value")
ESS_COLUMNS = ("parameter", "ess", "n")
SWAP_COLUMNS = ("cycle", "cold_rung", "hot_rung", "delta_e", "delta_beta", "probability", "accepted")


class DataFormatError(ValueError):
    """A CSV file does not match its schema."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _read_rows(path: Path, header: Sequence[str] | None = None) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file, header required")
    head = [h.strip() for h in rows[0]]
    if header is not None and head != list(header):
        raise DataFormatError(f"{path}: header {head} does not match expected {list(header)}")
    return head, rows[1:]


# -- dive data --------------------------------------------------------------

def write_data(path, obs: np.ndarray, offsets: np.ndarray) -> Path:
    def rows():
        for m, (a, b) in enumerate(zip(offsets[:-1], offsets[1:])):
            for t in range(a, b):
                yield (m + 1, t - a + 1, *obs[t])
    return _write_rows(path, DATA_COLUMNS, rows())


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"row {line}: {column} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise DataFormatError(f"row {line}: {column} is not finite")
    return v


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"row {line}: {column} {text!r} is not an integer") from None


def read_data(path) -> tuple[DataSet, np.ndarray, np.ndarray]:
    """Parse a dive CSV into (DataSet, observations (n, 3), offsets).

    Frames must be numbered 1, 2, ... in order, and dives 1, 2, ... within
    each frame. Row numbers in error messages count the header as row 1.
    """
    _, rows = _read_rows(path, DATA_COLUMNS)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    obs = np.empty((len(rows), 3))
    offsets = [0]
    frame, dive = 0, 0
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != len(DATA_COLUMNS):
            raise DataFormatError(f"row {line}: expected {len(DATA_COLUMNS)} fields, got {len(row)}")
        fi = _parse_int(row[0], line, "frame_index")
        di = _parse_int(row[1], line, "dive_index")
        if fi == frame + 1 and di == 1:
            if r > 0:
                offsets.append(r)
            frame, dive = fi, 1
        elif fi == frame and di == dive + 1:
            dive = di
        else:
            raise DataFormatError(f"row {line}: frame/dive index ({fi}, {di}) out of sequence")
        for c, name in enumerate(COVARIATES):
            obs[r, c] = _parse_float(row[2 + c], line, name)
        if obs[r, 0] < 0 or obs[r, 1] <= 0 or obs[r, 2] < 0:
            raise DataFormatError(
                f"row {line}: need duration >= 0, max_depth > 0 and wiggliness >= 0")
    offsets.append(len(rows))
    offsets = np.asarray(offsets, dtype=np.int64)
    return DataSet.from_arrays(obs, offsets), obs, offsets


def write_truth(path, offsets: np.ndarray, internal: np.ndarray, production: np.ndarray) -> Path:
    def rows():
        for m, (a, b) in enumerate(zip(offsets[:-1], offsets[1:])):
            for t in range(a, b):
                yield (m + 1, t - a + 1, int(internal[m]) + 1, int(production[t]) + 1)
    return _write_rows(path, TRUTH_COLUMNS, rows())


# -- traces -----------------------------------------------------------------

def write_trace(path, trace: Trace) -> Path:
    header = ["sweep", *trace.names, "energy"]
    rows = ((i + 1, *trace.values[i], trace.energies[i]) for i in range(len(trace)))
    return _write_rows(path, header, rows)


def read_trace(path, burn_in: int = 0) -> Trace:
    head, rows = _read_rows(path)
    if len(head) < 2 or head[0] != "sweep" or head[-1] != "energy":
        raise DataFormatError(f"{path}: trace header must be sweep, <parameters...>, energy")
    if not rows:
        raise DataFormatError(f"{path}: trace has no sweeps")
    vals = np.empty((len(rows), len(head) - 1))
    for r, row in enumerate(rows):
        if len(row) != len(head):
            raise DataFormatError(f"row {r + 2}: expected {len(head)} fields, got {len(row)}")
        for c in range(1, len(head)):
            try:
                vals[r, c - 1] = float(row[c])
            except ValueError:
                raise DataFormatError(f"row {r + 2}: {head[c]} {row[c]!r} is not a number") from None
    if burn_in >= len(rows):
        raise DataFormatError(f"{path}: burn_in {burn_in} leaves no sweeps out of {len(rows)}")
    return Trace(names=head[1:-1], values=vals[:, :-1], energies=vals[:, -1], burn_in=burn_in)


def write_summary(path, summaries: dict[str, ParamSummary], acceptance: dict[str, float] | None = None) -> Path:
    acceptance = acceptance or {}
    rows = ((name, s.mean, s.sd, s.p2, s.p50, s.p98, acceptance.get(name))
            for name, s in summaries.items())
    return _write_rows(path, SUMMARY_COLUMNS, rows)


def read_summary(path) -> dict[str, dict[str, float]]:
    _, rows = _read_rows(path, SUMMARY_COLUMNS)
    out = {}
    for row in rows:
        out[row[0]] = {k: (float(v) if v != "" else math.nan) for k, v in zip(SUMMARY_COLUMNS[1:], row[1:])}
    return out


def write_acf(path, acfs: dict[str, np.ndarray]) -> Path:
    rows = ((lag + 1, name, v) for name, rho in acfs.items() for lag, v in enumerate(rho))
    return _write_rows(path, ACF_COLUMNS, rows)


def write_ess(path, values: dict[str, tuple[float, int]]) -> Path:
    return _write_rows(path, ESS_COLUMNS, ((name, e, n) for name, (e, n) in values.items()))


def write_swaps(path, records: Sequence[SwapRecord]) -> Path:
    rows = ((r.cycle, r.pair[0] + 1, r.pair[1] + 1, r.delta_e, r.delta_beta, r.probability, r.accepted)
            for r in records)
    return _write_rows(path, SWAP_COLUMNS, rows)


# -- manifest ---------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config_sha256: str, seed: int, overrides: dict,
                   files: Sequence[Path], inputs: dict | None = None, extra: dict | None = None) -> Path:
    """key=value lines; one ``file.<name>`` entry per output with its sha256."""
    path = Path(path)
    lines = [
        f"schema_version={SCHEMA_VERSION}",
        f"command={command}",
        f"config_sha256={config_sha256}",
        f"seed={seed}",
        f"overrides={json.dumps(overrides, sort_keys=True)}",
        f"inputs={json.dumps(inputs or {}, sort_keys=True)}",
    ]
    lines += [f"{k}={v}" for k, v in (extra or {}).items()]
    for f in files:
        f = Path(f)
        lines.append(f"file.{f.name}={sha256_file(f)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def verify_manifest(path, config_sha256: str | None = None) -> list[str]:
    """Problems found: missing or altered files, or a config hash mismatch."""
    path = Path(path)
    man = read_manifest(path)
    problems = []
    if config_sha256 is not None and man.get("config_sha256") != config_sha256:
        problems.append("config_sha256 does not match")
    for key, digest in man.items():
        if not key.startswith("file."):
            continue
        f = path.parent / key[len("file."):]
        if not f.exists():
            problems.append(f"{f.name} missing")
        elif sha256_file(f) != digest:
            problems.append(f"{f.name} changed since the manifest was written")
    return problems
