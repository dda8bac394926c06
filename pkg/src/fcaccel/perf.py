"""Analytical throughput, transfer-time, and batch-size model.

All quantities describe one layer transition (a weight matrix of
``out_width`` rows by ``in_width`` columns) evaluated for ``total_samples``
inputs at batch size ``batch_size``:

    cycles  = ceil(out/m) * ceil(in*(1-q)/r) * N
    t_calc  = out * in * N * (1-q) / (m * r * clock)
    t_mem   = out * in * bytes_per_weight * overhead * (1-q) * N / (T * n)
    t_proc  = max(t_calc, t_mem)          (a tie counts as compute bound)
    n_opt   = m * r * clock * bytes_per_weight * overhead / T

``weight_bits`` is stored in bits and converted to bytes exactly once, at
the points where a division by the memory throughput (bytes/s) happens;
mixing the units silently is an easy way to be wrong by 8x.

The calculation and the weight transfer run in parallel, so the larger of
the two times is the layer's processing time; equating them yields the
batch size ``n_opt`` at which neither side waits. The transfer-time
formula amortizes one weight fetch over a whole batch and is asymptotic in
N >> n; reports carry N/n so callers can judge the regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum

from .errors import UnknownAxis


class Bound(Enum):
    """Which side dominates a layer's processing time."""

    COMPUTE = "compute"
    MEMORY = "memory"


@dataclass(frozen=True)
class PerfParams:
    """Inputs to the analytical model (one layer transition)."""

    in_width: int = 784
    out_width: int = 800
    total_samples: int = 10000
    batch_size: float = 1
    units: int = 114
    tuples: int = 1
    clock_hz: float = 100e6
    mem_bytes_per_sec: float = 1.801e9
    weight_bits: int = 16
    prune_fraction: float = 0.0
    pack_overhead: float = 1.0

    def __post_init__(self) -> None:
        if min(self.in_width, self.out_width, self.total_samples, self.units, self.tuples) < 1:
            raise ValueError("widths, sample count, units, tuples must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.clock_hz <= 0 or self.mem_bytes_per_sec <= 0 or self.weight_bits < 1:
            raise ValueError("clock_hz, mem_bytes_per_sec, weight_bits must be positive")
        if not 0.0 <= self.prune_fraction <= 1.0:
            raise ValueError("prune_fraction must lie in [0, 1]")
        if self.pack_overhead < 1.0:
            raise ValueError("pack_overhead must be >= 1")


def _snapped_ceil(v: float, eps: float = 1e-9) -> int:
    """ceil that forgives float dust just below an integer."""
    k = round(v)
    if abs(v - k) < eps:
        return int(k)
    return math.ceil(v)


def layer_cycles(p: PerfParams) -> int:
    """Clock cycles to compute the layer for all samples."""
    inner = p.in_width * (1.0 - p.prune_fraction) / p.tuples
    return math.ceil(p.out_width / p.units) * _snapped_ceil(inner) * p.total_samples


def t_calc(p: PerfParams) -> float:
    """Compute time in seconds (perfect pipelining, one MAC per resource per cycle)."""
    ops = p.out_width * p.in_width * p.total_samples * (1.0 - p.prune_fraction)
    return ops / (p.units * p.tuples * p.clock_hz)


def t_mem(p: PerfParams) -> float:
    """Weight transfer time in seconds, amortized over the batch."""
    traffic_bytes = (
        p.out_width
        * p.in_width
        * (p.weight_bits / 8.0)
        * p.pack_overhead
        * (1.0 - p.prune_fraction)
        * p.total_samples
    )
    return traffic_bytes / (p.mem_bytes_per_sec * p.batch_size)


def t_proc(p: PerfParams) -> tuple[float, Bound]:
    """Overall processing time and its limiter; ties count as compute bound."""
    tc = t_calc(p)
    tm = t_mem(p)
    if tm > tc:
        return tm, Bound.MEMORY
    return tc, Bound.COMPUTE


def n_opt(p: PerfParams) -> float:
    """Batch size at which compute and transfer times balance (real-valued;
    round up for a concrete batch size)."""
    return (
        p.units
        * p.tuples
        * p.clock_hz
        * (p.weight_bits / 8.0)
        * p.pack_overhead
        / p.mem_bytes_per_sec
    )


def gops(total_macs: float, elapsed: float, prune_fraction: float = 0.0) -> tuple[float, float | None]:
    """(actual, effective) throughput in operations per second, MAC = 1 op.

    ``actual`` counts executed MACs; ``effective`` is the dense-equivalent
    rate actual / (1 - prune_fraction), None when everything is pruned.
    """
    if elapsed <= 0:
        raise ValueError("elapsed time must be positive")
    actual = total_macs / elapsed
    if prune_fraction >= 1.0:
        return actual, None
    return actual, actual / (1.0 - prune_fraction)


def batch_latency(per_sample_time: float, n: float) -> float:
    """A sample's result is available only when its whole batch completes."""
    if n < 1:
        raise ValueError("batch size must be >= 1")
    return n * per_sample_time


@dataclass(frozen=True)
class PerfReport:
    """Derived metrics for one parameter point."""

    cycles: int
    t_calc: float
    t_mem: float
    t_proc: float
    bound: Bound
    gops_actual: float
    gops_effective: float | None
    n_opt: float
    per_sample_latency: float
    batch_latency: float
    samples_per_batch_ratio: float   # N / n, the formula assumes this is large

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["bound"] = self.bound.value
        return d

    def lines(self, prefix: str = "") -> list[str]:
        return [f"{prefix}{k}={v}" for k, v in self.as_dict().items()]


def make_report(p: PerfParams) -> PerfReport:
    tc = t_calc(p)
    tm = t_mem(p)
    tp, bound = t_proc(p)
    executed = p.out_width * p.in_width * p.total_samples * (1.0 - p.prune_fraction)
    if executed > 0 and tp > 0:
        actual, effective = gops(executed, tp, p.prune_fraction)
    else:
        actual, effective = 0.0, None
    per_sample = tp / p.total_samples
    return PerfReport(
        cycles=layer_cycles(p),
        t_calc=tc,
        t_mem=tm,
        t_proc=tp,
        bound=bound,
        gops_actual=actual,
        gops_effective=effective,
        n_opt=n_opt(p),
        per_sample_latency=per_sample,
        batch_latency=batch_latency(per_sample, p.batch_size),
        samples_per_batch_ratio=p.total_samples / p.batch_size,
    )


# ---------------------------------------------------------------------------
# Design-space sweeps
# ---------------------------------------------------------------------------

_AXIS_ALIASES = {
    "n": "batch_size",
    "m": "units",
    "r": "tuples",
}
_FIELD_NAMES = {f.name for f in fields(PerfParams)}


def resolve_axis(axis: str) -> str:
    name = _AXIS_ALIASES.get(axis, axis)
    if name not in _FIELD_NAMES:
        raise UnknownAxis(f"{axis!r} is not a performance parameter")
    return name


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list[PerfReport]

    def diagnostics(self) -> dict[str, bool]:
        """Monotonicity of the headline times along the sweep."""
        out = {}
        for attr in ("t_proc", "t_calc", "t_mem"):
            series = [getattr(r, attr) for r in self.reports]
            out[f"{attr}_nonincreasing"] = all(
                b <= a * (1 + 1e-12) for a, b in zip(series, series[1:])
            )
            out[f"{attr}_nondecreasing"] = all(
                b >= a * (1 - 1e-12) for a, b in zip(series, series[1:])
            )
        return out

    def csv_rows(self) -> list[list]:
        header = [
            self.axis,
            "cycles",
            "t_calc",
            "t_mem",
            "t_proc",
            "bound",
            "gops_actual",
            "gops_effective",
            "n_opt",
            "per_sample_latency",
            "batch_latency",
        ]
        rows: list[list] = [header]
        for v, r in zip(self.values, self.reports):
            rows.append([
                v,
                r.cycles,
                r.t_calc,
                r.t_mem,
                r.t_proc,
                r.bound.value,
                r.gops_actual,
                "" if r.gops_effective is None else r.gops_effective,
                r.n_opt,
                r.per_sample_latency,
                r.batch_latency,
            ])
        return rows


def sweep(base: PerfParams, axis: str, values: list) -> SweepResult:
    """One report per value of the named parameter."""
    name = resolve_axis(axis)
    reports = [make_report(replace(base, **{name: v})) for v in values]
    return SweepResult(axis=name, values=list(values), reports=reports)
