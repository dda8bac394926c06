"""Network container, activation functions, model file format, and dataset
ingestion.

A network is an ordered list of dense layers; layer j's weight matrix has
one row per output neuron and one column per input neuron, so consecutive
matrices must chain (cols of matrix j+1 == rows of matrix j). Weights and
activations are Q7.8 raws (int16), accumulators Q15.16 (see fxp).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import fxp
from .errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    IoFailure,
    MalformedContainer,
    ParseError,
    TruncatedFile,
    UnsupportedVersion,
    WidthMismatch,
)


class ActivationKind(IntEnum):
    """Per-layer activation selector; values are the container wire codes."""

    RELU = 0
    SIGMOID_PLAN = 1
    IDENTITY = 2


# Piecewise-linear sigmoid segments: (exclusive upper bound on |x| as a
# Q15.16 raw, right-shift implementing the slope, intercept as a Q15.16
# raw). Slopes 1/4, 1/8, 1/32 and intercepts 0.5, 0.625, 0.84375 are exact
# in Q15.16; |x| >= 5 yields exactly 1. This table is the single source of
# truth for the approximation, pinned by the tests.
SIGMOID_SEGMENTS = (
    (1 << 16, 2, 32768),       # |x| < 1     : |x|/4  + 0.5
    (0x26000, 3, 40960),       # |x| < 2.375 : |x|/8  + 0.625
    (5 << 16, 5, 55296),       # |x| < 5     : |x|/32 + 0.84375
)
SIGMOID_ONE = fxp.ACC_ONE


def relu(x: int) -> int:
    """max(0, x) on a Q15.16 raw, exact."""
    return x if x > 0 else 0


def sigmoid_plan(x: int) -> int:
    """Piecewise-linear sigmoid on a Q15.16 raw.

    Segment arithmetic stays in fixed point: slopes are right shifts,
    intercepts exact Q15.16 constants. Negative inputs use the symmetry
    sigmoid(-x) = 1 - sigmoid(x), which holds exactly here.
    """
    t = -x if x < 0 else x
    for bound, shift, intercept in SIGMOID_SEGMENTS:
        if t < bound:
            y = (t >> shift) + intercept
            break
    else:
        y = SIGMOID_ONE
    return SIGMOID_ONE - y if x < 0 else y


def apply_activation(kind: ActivationKind, x: int) -> int:
    """Apply an activation at full 32-bit precision, then narrow to Q7.8."""
    if kind == ActivationKind.RELU:
        z = relu(x)
    elif kind == ActivationKind.SIGMOID_PLAN:
        z = sigmoid_plan(x)
    else:
        z = x
    return fxp.to_q78_saturating(z)


def sigmoid_plan_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized ``sigmoid_plan`` on int64 Q15.16 raws."""
    x = np.asarray(x, dtype=np.int64)
    t = np.abs(x)
    y = np.full(t.shape, SIGMOID_ONE, dtype=np.int64)
    # widest segment first so narrower masks overwrite
    for bound, shift, intercept in reversed(SIGMOID_SEGMENTS):
        m = t < bound
        y[m] = (t[m] >> shift) + intercept
    return np.where(x < 0, SIGMOID_ONE - y, y)


def apply_activation_vec(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Vectorized ``apply_activation``; int64 raws in, int16 Q7.8 out."""
    x = np.asarray(x, dtype=np.int64)
    if kind == ActivationKind.RELU:
        z = np.maximum(x, 0)
    elif kind == ActivationKind.SIGMOID_PLAN:
        z = sigmoid_plan_vec(x)
    else:
        z = x
    return fxp.to_q78_vec(z)


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

@dataclass
class DenseLayer:
    """One weight matrix plus its activation.

    ``weights`` holds Q7.8 raws, shape (out_width, in_width): row i is the
    fan-in of output neuron i.
    """

    weights: np.ndarray
    activation: ActivationKind

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.int16)
        if self.weights.ndim != 2 or 0 in self.weights.shape:
            raise DimensionMismatch(
                f"weight matrix must be 2-D and non-empty, got shape {self.weights.shape}"
            )
        self.activation = ActivationKind(self.activation)

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]


@dataclass
class NetworkModel:
    """Ordered dense layers; at least one weight matrix."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionMismatch("a network needs at least one weight matrix")
        for j in range(1, len(self.layers)):
            prev, cur = self.layers[j - 1], self.layers[j]
            if cur.in_width != prev.out_width:
                raise DimensionMismatch(
                    f"layer {j} expects {cur.in_width} inputs but layer "
                    f"{j - 1} produces {prev.out_width}"
                )

    @property
    def widths(self) -> list[int]:
        """Neuron count per layer, input layer first."""
        return [self.layers[0].in_width] + [l.out_width for l in self.layers]

    @property
    def arch(self) -> str:
        """Architecture string, e.g. '784x800x10'."""
        return "x".join(str(w) for w in self.widths)

    @property
    def total_weights(self) -> int:
        return sum(l.weights.size for l in self.layers)


@dataclass
class Dataset:
    """Samples as Q7.8 raw vectors, optionally labeled with class indices."""

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=np.int16)
        if self.samples.ndim != 2:
            raise WidthMismatch("samples must form a 2-D array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.samples):
                raise CountMismatch(
                    f"{len(self.samples)} samples but {len(self.labels)} labels"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def width(self) -> int:
        return self.samples.shape[1]


# ---------------------------------------------------------------------------
# Model container ("NNSM")
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"NNSM"
MODEL_VERSION = 1

_ACTIVATION_CODES = {k.value: k for k in ActivationKind}


def save_model(model: NetworkModel, path: str | Path) -> None:
    """Write the NNSM container; load_model reproduces the model bit-exactly."""
    buf = bytearray()
    buf += MODEL_MAGIC
    buf.append(MODEL_VERSION)
    buf.append(len(model.layers))
    for layer in model.layers:
        buf += struct.pack("<II", layer.out_width, layer.in_width)
        buf.append(layer.activation.value)
        buf += layer.weights.astype("<i2").tobytes()
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise IoFailure(f"cannot write model container: {exc}") from exc


def load_model(path: str | Path) -> NetworkModel:
    """Read and fully validate an NNSM container."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise MalformedContainer(f"cannot read model container: {exc}") from exc
    if len(data) < 6:
        raise MalformedContainer("container shorter than the 6-byte header")
    if data[:4] != MODEL_MAGIC:
        raise MalformedContainer(f"bad magic {data[:4]!r}, expected {MODEL_MAGIC!r}")
    if data[4] != MODEL_VERSION:
        raise UnsupportedVersion(f"container version {data[4]}, expected {MODEL_VERSION}")
    matrix_count = data[5]
    if matrix_count < 1:
        raise MalformedContainer("container declares zero weight matrices")

    layers: list[DenseLayer] = []
    off = 6
    for j in range(matrix_count):
        if off + 9 > len(data):
            raise MalformedContainer(f"truncated header for matrix {j}")
        rows, cols = struct.unpack_from("<II", data, off)
        code = data[off + 8]
        off += 9
        if rows == 0 or cols == 0:
            raise MalformedContainer(f"matrix {j} has zero dimension {rows}x{cols}")
        if code not in _ACTIVATION_CODES:
            raise MalformedContainer(f"matrix {j} has unknown activation code {code}")
        nbytes = rows * cols * 2
        if off + nbytes > len(data):
            raise MalformedContainer(f"truncated weight payload for matrix {j}")
        weights = np.frombuffer(data, dtype="<i2", count=rows * cols, offset=off)
        off += nbytes
        layers.append(DenseLayer(weights.reshape(rows, cols), _ACTIVATION_CODES[code]))
    if off != len(data):
        raise MalformedContainer(f"{len(data) - off} trailing bytes after last matrix")
    return NetworkModel(layers)


# ---------------------------------------------------------------------------
# Dataset loaders
# ---------------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def load_idx(
    images_path: str | Path,
    labels_path: str | Path | None = None,
    scale: float = 1.0 / 255.0,
) -> Dataset:
    """Load a big-endian IDX image tensor (and optional label vector).

    Each pixel byte p becomes the Q7.8 quantization of p * scale.
    """
    data = _read_bytes(images_path)
    if len(data) < 16:
        raise TruncatedFile(f"{images_path}: IDX image header needs 16 bytes")
    magic, count, rows, cols = struct.unpack_from(">IIII", data, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(
            f"{images_path}: magic 0x{magic:08X}, expected 0x{IDX_IMAGES_MAGIC:08X}"
        )
    npix = count * rows * cols
    if len(data) < 16 + npix:
        raise TruncatedFile(f"{images_path}: expected {npix} pixel bytes")
    pixels = np.frombuffer(data, dtype=np.uint8, count=npix, offset=16)
    samples = fxp.quantize_vec(pixels.astype(np.float64) * scale)
    samples = samples.reshape(count, rows * cols)

    labels = None
    if labels_path is not None:
        ldata = _read_bytes(labels_path)
        if len(ldata) < 8:
            raise TruncatedFile(f"{labels_path}: IDX label header needs 8 bytes")
        lmagic, lcount = struct.unpack_from(">II", ldata, 0)
        if lmagic != IDX_LABELS_MAGIC:
            raise BadMagic(
                f"{labels_path}: magic 0x{lmagic:08X}, expected 0x{IDX_LABELS_MAGIC:08X}"
            )
        if lcount != count:
            raise CountMismatch(f"{count} images but {lcount} labels")
        if len(ldata) < 8 + lcount:
            raise TruncatedFile(f"{labels_path}: expected {lcount} label bytes")
        labels = np.frombuffer(ldata, dtype=np.uint8, count=lcount, offset=8).astype(np.int64)
    return Dataset(samples, labels)


def load_csv_vectors(path: str | Path, width: int) -> Dataset:
    """Load UTF-8 CSV samples, one per line, `width` numeric fields each.

    Rows may carry one extra trailing integer label column; all rows must
    agree on whether they do.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    values: list[list[float]] = []
    labels: list[int] = []
    labeled: bool | None = None
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row:
            continue
        if labeled is None:
            if len(row) == width:
                labeled = False
            elif len(row) == width + 1:
                labeled = True
            else:
                raise WidthMismatch(
                    f"{path}:{lineno}: {len(row)} fields, expected {width} or {width + 1}"
                )
        expected = width + 1 if labeled else width
        if len(row) != expected:
            raise WidthMismatch(
                f"{path}:{lineno}: {len(row)} fields, expected {expected}"
            )
        fields = row[:width]
        try:
            values.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric field: {exc}") from exc
        if labeled:
            try:
                labels.append(int(row[width]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: label is not an integer") from exc

    if not values:
        return Dataset(np.empty((0, width), dtype=np.int16), None)
    samples = fxp.quantize_vec(np.array(values, dtype=np.float64))
    return Dataset(samples, np.array(labels, dtype=np.int64) if labeled else None)
