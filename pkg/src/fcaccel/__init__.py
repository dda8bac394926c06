"""fcaccel: bit-exact emulator of a Q7.8 fully-connected inference
accelerator with batch and pruned-stream datapaths, plus the analytical
throughput/latency model that goes with it."""

from .engine import (
    BatchRun,
    EngineConfig,
    EvalResult,
    SparseRun,
    classify,
    evaluate_accuracy,
    infer_batch,
    infer_reference,
    infer_sparse,
)
from .model import (
    ActivationKind,
    Dataset,
    DenseLayer,
    NetworkModel,
    load_csv_vectors,
    load_idx,
    load_model,
    save_model,
)
from .perf import Bound, PerfParams, PerfReport, make_report, n_opt, sweep
from .prune import (
    PrunedLayer,
    PrunedModel,
    SparseRow,
    densify,
    densify_model,
    overhead_factor,
    pack_row,
    prune_matrix,
    prune_model,
    read_nnsp,
    row_addresses,
    unpack_stream,
    write_nnsp,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "BatchRun",
    "Bound",
    "Dataset",
    "DenseLayer",
    "EngineConfig",
    "EvalResult",
    "NetworkModel",
    "PerfParams",
    "PerfReport",
    "PrunedLayer",
    "PrunedModel",
    "SparseRow",
    "SparseRun",
    "classify",
    "densify",
    "densify_model",
    "evaluate_accuracy",
    "infer_batch",
    "infer_reference",
    "infer_sparse",
    "load_csv_vectors",
    "load_idx",
    "load_model",
    "make_report",
    "n_opt",
    "overhead_factor",
    "pack_row",
    "prune_matrix",
    "prune_model",
    "read_nnsp",
    "row_addresses",
    "save_model",
    "sweep",
    "unpack_stream",
    "write_nnsp",
]
