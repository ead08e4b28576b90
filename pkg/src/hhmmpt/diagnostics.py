"""Trace post-processing: autocorrelation, ESS, acceptance and posterior summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERCENTILES = (2, 50, 98)


class DiagnosticError(ValueError):
    """A diagnostic is undefined for the given input (e.g. a constant series)."""


@dataclass
class Trace:
    names: list[str]
    values: np.ndarray  # (sweeps, params)
    energies: np.ndarray
    burn_in: int = 0
    accepts: np.ndarray | None = None
    proposals: np.ndarray | None = None
    scales: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError("trace values must be (sweeps, len(names))")
        if self.energies.shape != (self.values.shape[0],):
            raise ValueError("energy sequence length differs from parameter sequences")
        if not 0 <= self.burn_in < max(self.values.shape[0], 1):
            raise ValueError("burn_in must be smaller than the trace length")

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name == "energy":
            return self.energies
        return self.values[:, self.names.index(name)]

    def post_burn_in(self) -> dict[str, np.ndarray]:
        out = {n: self.values[self.burn_in:, i] for i, n in enumerate(self.names)}
        out["energy"] = self.energies[self.burn_in:]
        return out

    def acceptance(self) -> dict[str, float]:
        if self.accepts is None:
            return {}
        return {n: acceptance_fraction(a, p) if p > 0 else float("nan")
                for n, a, p in zip(self.names, self.accepts, self.proposals)}


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    p2: float
    p50: float
    p98: float


def _autocov(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def acf(series, max_lag: int) -> np.ndarray:
    """rho_1..rho_max_lag with the biased (1/T) autocovariance estimator."""
    x = np.asarray(series, dtype=float)
    if not 1 <= max_lag < x.shape[0]:
        raise DiagnosticError("need 1 <= max_lag < len(series)")
    c = _autocov(x)
    if not c[0] > 0:
        raise DiagnosticError("autocorrelation undefined for a constant series")
    return np.clip(c[1:max_lag + 1] / c[0], -1.0, 1.0)


def ess(series) -> float:
    """T / (1 + 2 sum rho_l), truncating the sum at the first non-positive rho_l."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise DiagnosticError("need at least two samples")
    c = _autocov(x)
    if not c[0] > 0:
        raise DiagnosticError("effective sample size undefined for a constant series")
    rho = c[1:] / c[0]
    nonpos = np.nonzero(rho <= 0)[0]
    stop = nonpos[0] if nonpos.size else rho.shape[0]
    tau = 1.0 + 2.0 * rho[:stop].sum()
    return float(min(n, n / tau))


def acceptance_fraction(accepts: int, proposals: int) -> float:
    if proposals <= 0:
        raise DiagnosticError("acceptance fraction undefined without proposals")
    return accepts / proposals


def summarize_series(x) -> ParamSummary:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise DiagnosticError("cannot summarise an empty series")
    # an infinite energy (out-of-support start) yields mean inf and sd nan rather than a warning
    with np.errstate(invalid="ignore"):
        p2, p50, p98 = np.percentile(x, PERCENTILES, method="linear")
        return ParamSummary(float(x.mean()), float(x.std()), float(p2), float(p50), float(p98))


def summarize(trace: Trace) -> dict[str, ParamSummary]:
    """Posterior summaries of every parameter and the energy after burn-in."""
    if len(trace) - trace.burn_in <= 0:
        raise DiagnosticError("no samples after burn-in")
    return {name: summarize_series(x) for name, x in trace.post_burn_in().items()}
