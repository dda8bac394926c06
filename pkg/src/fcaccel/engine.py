"""Functional emulation of the accelerator datapaths.

Three paths produce activations:

  * ``infer_reference`` -- plain nested loops in natural row order, the
    oracle the other two are checked against.
  * ``infer_batch``     -- dense batch datapath: weights stream section by
    section and every section is reused across all n batch samples before
    the next section's weights are fetched.
  * ``infer_sparse``    -- pruned-stream datapath: m logical row processors
    consume (weight, zero-run) tuple streams round-robin (processor p owns
    rows p, p+m, ...), fetching activations at the decoded addresses.

All three are bit-identical per sample for the same effective weights:
each neuron folds its products in ascending input index, and a zero
product never changes a (saturating) accumulator, so skipping pruned
weights or reordering the (section, sample) traversal cannot change
values. Timing is analytic, from closed-form cycle counts, not event
simulation; arithmetic is the only thing emulated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import fxp
from .errors import (
    BatchSizeMismatch,
    EmptyDataset,
    MissingLabels,
    WidthMismatch,
)
from .model import (
    Dataset,
    NetworkModel,
    apply_activation,
    apply_activation_vec,
)
from .prune import PrunedModel


@dataclass
class EngineConfig:
    """Hardware parameters shared by the engines and the performance model.

    ``units`` is the number of parallel row processors (one neuron each);
    ``tuples`` the resources per unit -- the batch datapath always behaves
    as one MAC per unit, the sparse datapath consumes this many stream
    tuples per cycle. ``act_cycles`` is the activation-function latency.
    """

    units: int = 114
    tuples: int = 3
    batch_size: int = 1
    clock_hz: float = 100e6
    mem_bytes_per_sec: float = 1.801e9
    weight_bits: int = 16
    act_cycles: int = 1

    def __post_init__(self) -> None:
        if min(self.units, self.tuples, self.batch_size, self.act_cycles) < 1:
            raise ValueError("units, tuples, batch_size, act_cycles must be >= 1")
        if self.clock_hz <= 0 or self.mem_bytes_per_sec <= 0 or self.weight_bits < 1:
            raise ValueError("clock_hz, mem_bytes_per_sec, weight_bits must be positive")


@dataclass
class BatchRun:
    """Outputs (one row per sample) plus per-layer cycle counts."""

    outputs: np.ndarray
    layer_cycles: list[int]

    @property
    def total_cycles(self) -> int:
        return sum(self.layer_cycles)


@dataclass
class SparseRun:
    """Single-sample output plus per-layer cycle counts.

    ``layer_cycles`` is the busiest row processor's tuple-word cycles per
    layer (rows have uneven stored-tuple counts); ``layer_cycles_formula``
    is the closed-form count assuming uniformly distributed
    remaining weights. Both are reported.
    """

    output: np.ndarray
    layer_cycles: list[int]
    layer_cycles_formula: list[int]

    @property
    def total_cycles(self) -> int:
        return sum(self.layer_cycles)

    @property
    def total_cycles_formula(self) -> int:
        return sum(self.layer_cycles_formula)


@dataclass
class EvalResult:
    accuracy: float
    correct: int
    total: int
    cycles: int


# ---------------------------------------------------------------------------
# Reference path
# ---------------------------------------------------------------------------

def infer_reference(model: NetworkModel, sample: np.ndarray) -> np.ndarray:
    """Forward pass with direct nested loops in natural row order."""
    acts = np.asarray(sample, dtype=np.int16).tolist()
    if len(acts) != model.layers[0].in_width:
        raise WidthMismatch(
            f"sample length {len(acts)} != input width {model.layers[0].in_width}"
        )
    mac = fxp.mac
    for layer in model.layers:
        nxt = []
        kind = layer.activation
        for row in layer.weights.tolist():
            acc = 0
            for a, w in zip(acts, row):
                acc = mac(acc, a, w)
            nxt.append(apply_activation(kind, acc))
        acts = nxt
    return np.array(acts, dtype=np.int16)


# ---------------------------------------------------------------------------
# Batch path
# ---------------------------------------------------------------------------

def batch_layer_cycles(out_width: int, in_width: int, cfg: EngineConfig) -> int:
    """Closed-form cycles for one layer of the batch datapath: every section
    spends in_width cycles per sample, plus the activation tail for the
    last section of the last sample."""
    sections = math.ceil(out_width / cfg.units)
    return sections * in_width * cfg.batch_size + cfg.units * cfg.act_cycles


def infer_batch(model: NetworkModel, batch: np.ndarray, cfg: EngineConfig) -> BatchRun:
    """Run n samples through the batch datapath.

    Sections tile each layer's rows in blocks of ``units``; within a
    section all n samples are processed before the next section's weights
    would be fetched (the weight-reuse order). Per-sample outputs are
    bit-identical to the reference path.
    """
    acts = np.ascontiguousarray(batch, dtype=np.int16)
    if acts.ndim != 2:
        raise BatchSizeMismatch("batch must be a 2-D array of samples")
    n = acts.shape[0]
    if n != cfg.batch_size:
        raise BatchSizeMismatch(f"batch has {n} samples, config says {cfg.batch_size}")
    if acts.shape[1] != model.layers[0].in_width:
        raise WidthMismatch(
            f"sample length {acts.shape[1]} != input width {model.layers[0].in_width}"
        )

    m = cfg.units
    cycles: list[int] = []
    for layer in model.layers:
        out_w, in_w = layer.weights.shape
        out = np.empty((n, out_w), dtype=np.int16)
        for sec in range(math.ceil(out_w / m)):
            lo = sec * m
            w_sec = layer.weights[lo : lo + m]
            for s in range(n):    # same weights, different samples
                accs = fxp.fold_rows(w_sec, acts[s])
                out[s, lo : lo + w_sec.shape[0]] = apply_activation_vec(
                    layer.activation, accs
                )
        cycles.append(batch_layer_cycles(out_w, in_w, cfg))
        acts = out
    return BatchRun(outputs=acts, layer_cycles=cycles)


# ---------------------------------------------------------------------------
# Sparse path
# ---------------------------------------------------------------------------

def infer_sparse(pm: PrunedModel, sample: np.ndarray, cfg: EngineConfig) -> SparseRun:
    """Run one sample through the pruned-stream datapath.

    Row processor p owns rows p, p+m, p+2m, ...; each consumes its row's
    tuple stream at ``tuples`` tuples per cycle and accumulates
    weight * activation[address]. A layer is done when its busiest
    processor is done. The output merge (every processor's activations are
    broadcast to all I/O memory replicas) has no functional effect, so it
    is not simulated.
    """
    acts = np.asarray(sample, dtype=np.int16)
    if acts.ndim != 1 or acts.shape[0] != pm.layers[0].input_width:
        raise WidthMismatch(
            f"sample length {acts.shape} != input width {pm.layers[0].input_width}"
        )

    m = cfg.units
    r = cfg.tuples
    cycles: list[int] = []
    cycles_formula: list[int] = []
    for pl, kind in zip(pm.layers, pm.activations):
        if acts.shape[0] != pl.input_width:
            raise WidthMismatch(
                f"layer expects {pl.input_width} inputs, got {acts.shape[0]}"
            )
        a64 = acts.astype(np.int64)
        accs = np.zeros(pl.row_count, dtype=np.int64)
        proc_busy = [0] * m
        for k, (w_arr, addr_arr) in enumerate(pl.gather_arrays()):
            if w_arr.size:
                accs[k] = fxp.mac_fold(w_arr, a64[addr_arr])
            proc_busy[k % m] += -(-w_arr.size // r)
        cycles.append(max(proc_busy))
        # input_width * (1 - q_prune) is the mean nonzero count per row,
        # an exact rational: nonzero_total / row_count
        inner = -(-pl.nonzero_total // (pl.row_count * r))
        cycles_formula.append(math.ceil(pl.row_count / m) * inner)
        acts = apply_activation_vec(kind, accs)
    return SparseRun(
        output=acts, layer_cycles=cycles, layer_cycles_formula=cycles_formula
    )


# ---------------------------------------------------------------------------
# Classification / evaluation
# ---------------------------------------------------------------------------

def classify(output: np.ndarray) -> int:
    """Index of the maximum output; ties break to the lowest index."""
    return int(np.argmax(np.asarray(output)))


def evaluate_accuracy(
    model: NetworkModel | PrunedModel,
    dataset: Dataset,
    engine: str,
    cfg: EngineConfig,
) -> EvalResult:
    """Fraction of samples classified to their label, plus total cycles.

    The batch path pads a final partial batch by repeating the last sample
    and discards the pad outputs (the pads still cost cycles, as they would
    in hardware). The reference path is billed as a batch of one.
    """
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no samples")
    if dataset.labels is None:
        raise MissingLabels("accuracy evaluation needs labels")

    samples = dataset.samples
    labels = dataset.labels
    total = len(samples)
    predictions = np.empty(total, dtype=np.int64)
    cycles = 0

    if engine == "sparse":
        if not isinstance(model, PrunedModel):
            raise TypeError("sparse engine needs a PrunedModel")
        for i in range(total):
            run = infer_sparse(model, samples[i], cfg)
            predictions[i] = classify(run.output)
            cycles += run.total_cycles
    elif engine == "batch":
        if not isinstance(model, NetworkModel):
            raise TypeError("batch engine needs a NetworkModel")
        n = cfg.batch_size
        for lo in range(0, total, n):
            chunk = samples[lo : lo + n]
            pad = n - len(chunk)
            if pad:
                chunk = np.vstack([chunk, np.tile(chunk[-1], (pad, 1))])
            run = infer_batch(model, chunk, cfg)
            for s in range(n - pad):
                predictions[lo + s] = classify(run.outputs[s])
            cycles += run.total_cycles
    elif engine == "reference":
        if not isinstance(model, NetworkModel):
            raise TypeError("reference engine needs a NetworkModel")
        one = replace(cfg, batch_size=1)
        per_sample = sum(
            batch_layer_cycles(l.out_width, l.in_width, one) for l in model.layers
        )
        for i in range(total):
            predictions[i] = classify(infer_reference(model, samples[i]))
        cycles = per_sample * total
    else:
        raise ValueError(f"unknown engine {engine!r}")

    correct = int((predictions == labels).sum())
    return EvalResult(
        accuracy=correct / total, correct=correct, total=total, cycles=cycles
    )
