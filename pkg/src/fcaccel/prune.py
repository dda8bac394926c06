"""Threshold pruning and the packed sparse row stream codec.

A pruned row is a sequence of (weight, zero_run) tuples: ``zero_run`` zeros
precede ``weight`` in the dense row. Three tuples pack into each 64-bit
stream word, 21 bits per tuple (16-bit Q7.8 weight in the low bits, 5-bit
zero run above it); bit 63 stays clear so words align to the 64-bit memory
boundary. Gaps longer than 31 zeros are bridged with explicit
(weight=0, zero_run=31) filler tuples, each spanning 32 row positions;
fillers count toward the stored tuple total but not toward the pruning
factor, which is defined on the zero fraction of the dense row.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fxp
from .errors import (
    AddressOutOfRange,
    BadPadBit,
    DimensionMismatch,
    IoFailure,
    MalformedContainer,
    UnsupportedVersion,
    WordCountMismatch,
    ZeroRunOverflow,
)
from .model import ActivationKind, DenseLayer, NetworkModel

TUPLES_PER_WORD = 3
TUPLE_BITS = 21
ZERO_RUN_MAX = 31
_WEIGHT_MASK = 0xFFFF
_TUPLE_MASK = (1 << TUPLE_BITS) - 1


@dataclass(frozen=True)
class SparseRow:
    """One pruned matrix row as parallel (weight raw, zero run) sequences."""

    weights: tuple[int, ...]
    zero_runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.zero_runs):
            raise ValueError("weights and zero_runs must pair up")

    @property
    def nnz(self) -> int:
        """Stored tuple count, fillers included."""
        return len(self.weights)

    @property
    def tuples(self) -> list[tuple[int, int]]:
        return list(zip(self.weights, self.zero_runs))


@dataclass
class PrunedLayer:
    """A pruned weight matrix: sparse rows plus its pruning statistics.

    ``row_pruning_factors[k]`` is the zero fraction of dense row k after
    pruning; ``q_prune`` is their mean. ``stored_tuples`` counts tuples
    actually held in the stream (fillers included), so
    ``1 - stored_tuples / (row_count * input_width)`` is the *stored*
    pruning factor, reported separately. ``nonzero_total`` is the exact
    count of remaining (nonzero) weights, kept as an integer so cycle
    formulas can avoid float rounding dust.
    """

    rows: list[SparseRow]
    input_width: int
    row_pruning_factors: list[float]
    q_prune: float
    stored_tuples: int
    nonzero_total: int
    _gather_cache: list[tuple[np.ndarray, np.ndarray]] | None = field(
        default=None, repr=False, compare=False
    )

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def q_prune_stored(self) -> float:
        """Pruning factor counting filler tuples as stored weights."""
        return 1.0 - self.stored_tuples / (self.row_count * self.input_width)

    def gather_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per row: (weight raws as int64, input addresses as intp), cached."""
        if self._gather_cache is None:
            self._gather_cache = [
                (
                    np.array(row.weights, dtype=np.int64),
                    np.array(row_addresses(row, self.input_width), dtype=np.intp),
                )
                for row in self.rows
            ]
        return self._gather_cache


@dataclass
class PrunedModel:
    """Pruned layers paired with their activation selectors."""

    layers: list[PrunedLayer]
    activations: list[ActivationKind]

    def __post_init__(self) -> None:
        if len(self.layers) != len(self.activations):
            raise DimensionMismatch("one activation per pruned layer required")

    @property
    def q_prune_overall(self) -> float:
        """Fraction of all network weights that are zero (weight-count weighted)."""
        total = sum(l.row_count * l.input_width for l in self.layers)
        zeros = sum(l.q_prune * l.row_count * l.input_width for l in self.layers)
        return zeros / total


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------

def _encode_row(vals: np.ndarray) -> SparseRow:
    """Run-length encode one dense row, splitting gaps > 31 with fillers."""
    weights: list[int] = []
    zruns: list[int] = []
    prev_end = -1
    vlist = vals.tolist()
    for pos in np.flatnonzero(vals).tolist():
        gap = pos - prev_end - 1
        while gap > ZERO_RUN_MAX:
            weights.append(0)
            zruns.append(ZERO_RUN_MAX)
            prev_end += ZERO_RUN_MAX + 1   # filler spans 31 zeros + its own slot
            gap = pos - prev_end - 1
        weights.append(vlist[pos])
        zruns.append(gap)
        prev_end = pos
    return SparseRow(tuple(weights), tuple(zruns))


def prune_matrix(layer: DenseLayer, delta: float) -> PrunedLayer:
    """Zero every weight with |value| < delta and encode the sparse rows."""
    if delta < 0:
        raise ValueError("pruning threshold must be non-negative")
    raws = layer.weights
    mask = np.abs(raws.astype(np.int32)) < delta * fxp.Q78_ONE
    pruned = np.where(mask, np.int16(0), raws)

    rows = [_encode_row(pruned[k]) for k in range(pruned.shape[0])]
    width = pruned.shape[1]
    zero_counts = (pruned == 0).sum(axis=1)
    factors = [float(z) / width for z in zero_counts.tolist()]
    q = float(sum(factors) / len(factors))
    return PrunedLayer(
        rows=rows,
        input_width=width,
        row_pruning_factors=factors,
        q_prune=q,
        stored_tuples=sum(r.nnz for r in rows),
        nonzero_total=int((pruned != 0).sum()),
    )


def prune_model(model: NetworkModel, delta: float) -> PrunedModel:
    """Prune every layer of a network at the same threshold."""
    return PrunedModel(
        layers=[prune_matrix(l, delta) for l in model.layers],
        activations=[l.activation for l in model.layers],
    )


def densify(pruned: PrunedLayer, activation: ActivationKind = ActivationKind.IDENTITY) -> DenseLayer:
    """Reconstruct the dense matrix with explicit zeros."""
    out = np.zeros((pruned.row_count, pruned.input_width), dtype=np.int16)
    for k, (w_arr, addr_arr) in enumerate(pruned.gather_arrays()):
        if w_arr.size:
            out[k, addr_arr] = w_arr.astype(np.int16)
    return DenseLayer(out, activation)


def densify_model(pm: PrunedModel) -> NetworkModel:
    return NetworkModel(
        [densify(l, act) for l, act in zip(pm.layers, pm.activations)]
    )


# ---------------------------------------------------------------------------
# 64-bit word codec
# ---------------------------------------------------------------------------

def pack_row(row: SparseRow) -> list[int]:
    """Pack a sparse row into 64-bit words, three tuples per word.

    Tuple slot i of a word occupies bits [21*i, 21*i+20]: the 16-bit weight
    raw in the low bits, the 5-bit zero run above it. The last word's unused
    slots stay zero and decoders ignore them; bit 63 is always clear.
    """
    words: list[int] = []
    cur = 0
    slot = 0
    for w, z in zip(row.weights, row.zero_runs):
        if not 0 <= z <= ZERO_RUN_MAX:
            raise ZeroRunOverflow(f"zero run {z} does not fit 5 bits")
        if not fxp.Q78_MIN <= w <= fxp.Q78_MAX:
            raise ValueError(f"weight raw {w} does not fit 16 bits")
        cur |= ((w & _WEIGHT_MASK) | (z << 16)) << (slot * TUPLE_BITS)
        slot += 1
        if slot == TUPLES_PER_WORD:
            words.append(cur)
            cur = 0
            slot = 0
    if slot:
        words.append(cur)
    return words


def unpack_stream(words: list[int], nnz: int) -> SparseRow:
    """Exact inverse of pack_row for a row with ``nnz`` stored tuples."""
    expected = (nnz + TUPLES_PER_WORD - 1) // TUPLES_PER_WORD
    if len(words) != expected:
        raise WordCountMismatch(f"{len(words)} words for nnz={nnz}, expected {expected}")
    weights: list[int] = []
    zruns: list[int] = []
    for word in words:
        if not 0 <= word < (1 << 64):
            raise ValueError(f"not a 64-bit word: {word:#x}")
        if word >> 63:
            raise BadPadBit(f"bit 63 set in stream word {word:#018x}")
        for slot in range(TUPLES_PER_WORD):
            if len(weights) == nnz:
                break
            fieldbits = (word >> (slot * TUPLE_BITS)) & _TUPLE_MASK
            w = fieldbits & _WEIGHT_MASK
            if w & 0x8000:
                w -= 0x10000
            weights.append(w)
            zruns.append(fieldbits >> 16)
    return SparseRow(tuple(weights), tuple(zruns))


def row_addresses(row: SparseRow, input_width: int | None = None) -> list[int]:
    """Dense-row index of every stored tuple.

    Mirrors the hardware offset unit: addresses are produced word by word
    (three tuples at a time) from a carried offset register that holds one
    past the previous word's last address; within a word, tuple i lands at
    offset + i + sum of the zero runs up to and including tuple i. Filler
    tuples get addresses like any other.
    """
    addrs: list[int] = []
    o_reg = 0
    zruns = row.zero_runs
    for start in range(0, len(zruns), TUPLES_PER_WORD):
        zsum = 0
        for i, z in enumerate(zruns[start : start + TUPLES_PER_WORD]):
            zsum += z
            addrs.append(o_reg + i + zsum)
        o_reg = addrs[-1] + 1
    if input_width is not None and addrs and addrs[-1] >= input_width:
        raise AddressOutOfRange(
            f"address {addrs[-1]} >= row width {input_width}"
        )
    return addrs


def overhead_factor(r: int, b_weight: int) -> float:
    """Stream storage inflation per remaining weight: 64 / (r * b_weight)."""
    if r < 1 or b_weight < 1:
        raise ValueError("r and b_weight must be >= 1")
    return 64.0 / (r * b_weight)


# ---------------------------------------------------------------------------
# Stream file ("NNSP")
# ---------------------------------------------------------------------------

STREAM_MAGIC = b"NNSP"
STREAM_VERSION = 1


def write_nnsp(pruned: PrunedLayer, path: str | Path) -> None:
    """Write one pruned matrix as an NNSP stream file."""
    buf = bytearray()
    buf += STREAM_MAGIC
    buf.append(STREAM_VERSION)
    buf += struct.pack("<II", pruned.row_count, pruned.input_width)
    for row in pruned.rows:
        buf += struct.pack("<I", row.nnz)
        for word in pack_row(row):
            buf += struct.pack("<Q", word)
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise IoFailure(f"cannot write stream file: {exc}") from exc


def read_nnsp(path: str | Path) -> PrunedLayer:
    """Read an NNSP stream file back into a PrunedLayer."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise MalformedContainer(f"cannot read stream file: {exc}") from exc
    if len(data) < 13:
        raise MalformedContainer("stream file shorter than the 13-byte header")
    if data[:4] != STREAM_MAGIC:
        raise MalformedContainer(f"bad magic {data[:4]!r}, expected {STREAM_MAGIC!r}")
    if data[4] != STREAM_VERSION:
        raise UnsupportedVersion(f"stream version {data[4]}, expected {STREAM_VERSION}")
    row_count, input_width = struct.unpack_from("<II", data, 5)
    off = 13
    rows: list[SparseRow] = []
    for k in range(row_count):
        if off + 4 > len(data):
            raise MalformedContainer(f"truncated header for row {k}")
        (nnz,) = struct.unpack_from("<I", data, off)
        off += 4
        nwords = (nnz + TUPLES_PER_WORD - 1) // TUPLES_PER_WORD
        if off + 8 * nwords > len(data):
            raise MalformedContainer(f"truncated words for row {k}")
        words = list(struct.unpack_from(f"<{nwords}Q", data, off)) if nwords else []
        off += 8 * nwords
        rows.append(unpack_stream(words, nnz))
    if off != len(data):
        raise MalformedContainer(f"{len(data) - off} trailing bytes after last row")

    # zero fraction counts real zeros only, not filler slots; computed as
    # zeros/width so the floats match prune_matrix bit for bit
    nonzero_counts = [sum(1 for w in row.weights if w != 0) for row in rows]
    factors = [(input_width - c) / input_width for c in nonzero_counts]
    return PrunedLayer(
        rows=rows,
        input_width=input_width,
        row_pruning_factors=factors,
        q_prune=float(sum(factors) / len(factors)) if factors else 0.0,
        stored_tuples=sum(r.nnz for r in rows),
        nonzero_total=sum(nonzero_counts),
    )
