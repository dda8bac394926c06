"""Embedded invariant suite behind the ``selftest`` subcommand.

Runs deterministic checks of the codec, the engines, and the performance
formulas without any external files. Golden vectors live in module-level
constants so a harness can corrupt them and verify the failure is caught
and named.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fxp, perf
from .engine import EngineConfig, batch_layer_cycles, infer_batch, infer_reference, infer_sparse
from .model import ActivationKind, DenseLayer, NetworkModel, sigmoid_plan
from .prune import SparseRow, densify_model, pack_row, prune_model, row_addresses, unpack_stream

# Worked sparse-row example: the dense row
#   (0, -1.5, 0, 0, +0.3, -0.17, 0, 0, 0, +1.1, 0, 0, -0.2, 0, +0.1)
# pruned at 0.05, quantized with the documented rounding.
GOLDEN_ROW_TUPLES = ((-384, 1), (77, 2), (-44, 0), (282, 3), (-51, 2), (26, 1))
GOLDEN_ROW_WORDS = (0x03FF504009A1FE80, 0x0400685FF9A3011A)
GOLDEN_ROW_ADDRESSES = (1, 4, 5, 9, 12, 14)
GOLDEN_ROW_WIDTH = 15


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _random_model(rng: np.random.Generator, widths: list[int]) -> NetworkModel:
    layers = []
    kinds = list(ActivationKind)
    for i in range(len(widths) - 1):
        raw = fxp.quantize_vec(rng.normal(0.0, 0.5, size=(widths[i + 1], widths[i])))
        layers.append(DenseLayer(raw, kinds[int(rng.integers(len(kinds)))]))
    return NetworkModel(layers)


def _check_q78_round_trip() -> CheckResult:
    raws = np.arange(fxp.Q78_MIN, fxp.Q78_MAX + 1, dtype=np.int64)
    back = fxp.quantize_vec(raws.astype(np.float64) / fxp.Q78_ONE)
    ok = bool((back.astype(np.int64) == raws).all())
    return CheckResult("q78_round_trip", ok, "" if ok else "quantizer not a left inverse")


def _check_mul_exact(rng: np.random.Generator) -> CheckResult:
    a = rng.integers(fxp.Q78_MIN, fxp.Q78_MAX + 1, size=5000)
    b = rng.integers(fxp.Q78_MIN, fxp.Q78_MAX + 1, size=5000)
    for ai, bi in zip(a.tolist(), b.tolist()):
        if fxp.mul_q78(ai, bi) != ai * bi or fxp.mul_q78(bi, ai) != ai * bi:
            return CheckResult("mul_exact", False, f"mismatch at ({ai}, {bi})")
    return CheckResult("mul_exact", True)


def _check_plan_sigmoid() -> CheckResult:
    worst = 0.0
    for raw in range(-8 * fxp.ACC_ONE, 8 * fxp.ACC_ONE + 1, 256):
        y = sigmoid_plan(raw)
        if sigmoid_plan(-raw) != fxp.ACC_ONE - y:
            return CheckResult("plan_sigmoid", False, f"symmetry broken at raw {raw}")
        worst = max(worst, abs(y / fxp.ACC_ONE - 1.0 / (1.0 + math.exp(-raw / fxp.ACC_ONE))))
    ok = worst <= 0.02
    return CheckResult("plan_sigmoid", ok, f"max deviation {worst:.5f}")


def _check_codec_round_trip(rng: np.random.Generator) -> CheckResult:
    for trial in range(300):
        nnz = int(rng.integers(0, 24))
        weights = tuple(int(v) for v in rng.integers(fxp.Q78_MIN, fxp.Q78_MAX + 1, size=nnz))
        zruns = tuple(
            31 if rng.random() < 0.15 else int(rng.integers(0, 32)) for _ in range(nnz)
        )
        row = SparseRow(weights, zruns)
        words = pack_row(row)
        if any(w >> 63 for w in words):
            return CheckResult("codec_round_trip", False, f"pad bit set (trial {trial})")
        if unpack_stream(words, row.nnz) != row:
            return CheckResult("codec_round_trip", False, f"row mismatch (trial {trial})")
    return CheckResult("codec_round_trip", True)


def _check_golden_stream() -> CheckResult:
    row = SparseRow(
        tuple(w for w, _ in GOLDEN_ROW_TUPLES), tuple(z for _, z in GOLDEN_ROW_TUPLES)
    )
    words = pack_row(row)
    if tuple(words) != tuple(GOLDEN_ROW_WORDS):
        return CheckResult(
            "golden_stream", False,
            f"packed words {[hex(w) for w in words]} != golden",
        )
    if unpack_stream(list(GOLDEN_ROW_WORDS), row.nnz) != row:
        return CheckResult("golden_stream", False, "unpack does not invert golden words")
    addrs = row_addresses(row, GOLDEN_ROW_WIDTH)
    if tuple(addrs) != GOLDEN_ROW_ADDRESSES:
        return CheckResult("golden_stream", False, f"addresses {addrs} != golden")
    return CheckResult("golden_stream", True)


def _check_batch_equivalence(rng: np.random.Generator) -> CheckResult:
    for trial in range(10):
        widths = [int(rng.integers(4, 40)) for _ in range(int(rng.integers(2, 5)))]
        model = _random_model(rng, widths)
        for n in (1, 3, 8):
            batch = fxp.quantize_vec(rng.normal(0.0, 1.0, size=(n, widths[0])))
            cfg = EngineConfig(units=int(rng.integers(1, 20)), batch_size=n)
            run = infer_batch(model, batch, cfg)
            for s in range(n):
                if not np.array_equal(run.outputs[s], infer_reference(model, batch[s])):
                    return CheckResult(
                        "batch_equivalence", False, f"trial {trial} n={n} sample {s}"
                    )
    return CheckResult("batch_equivalence", True)


def _check_sparse_equivalence(rng: np.random.Generator) -> CheckResult:
    for trial in range(10):
        widths = [int(rng.integers(4, 40)) for _ in range(int(rng.integers(2, 5)))]
        model = _random_model(rng, widths)
        delta = float(rng.choice([0.0, 0.05, 0.3]))
        pm = prune_model(model, delta)
        dense = densify_model(pm)
        sample = fxp.quantize_vec(rng.normal(0.0, 1.0, size=widths[0]))
        cfg = EngineConfig(units=int(rng.integers(1, 8)))
        run = infer_sparse(pm, sample, cfg)
        if not np.array_equal(run.output, infer_reference(dense, sample)):
            return CheckResult("sparse_equivalence", False, f"trial {trial} delta={delta}")
    return CheckResult("sparse_equivalence", True)


def _check_batch_cycles(rng: np.random.Generator) -> CheckResult:
    for _ in range(20):
        out_w = int(rng.integers(1, 300))
        in_w = int(rng.integers(1, 300))
        cfg = EngineConfig(
            units=int(rng.integers(1, 130)),
            batch_size=int(rng.integers(1, 33)),
            act_cycles=int(rng.integers(1, 4)),
        )
        got = batch_layer_cycles(out_w, in_w, cfg)
        want = (
            math.ceil(out_w / cfg.units) * in_w * cfg.batch_size
            + cfg.units * cfg.act_cycles
        )
        if got != want:
            return CheckResult("batch_cycle_formula", False, f"{got} != {want}")
    return CheckResult("batch_cycle_formula", True)


def _check_perf_formulas() -> CheckResult:
    p = perf.PerfParams()
    nopt = perf.n_opt(p)
    if abs(nopt - 12.66) > 0.01:
        return CheckResult("perf_formulas", False, f"n_opt {nopt:.4f} != 12.66")
    actual, _ = perf.gops(1_275_200, 0.285e-3)
    if abs(actual / 1e9 - 4.47) > 0.02:
        return CheckResult("perf_formulas", False, f"gops {actual / 1e9:.3f} != 4.47")
    pb = perf.PerfParams(batch_size=nopt)
    if abs(perf.t_calc(pb) - perf.t_mem(pb)) > 1e-9 * perf.t_calc(pb):
        return CheckResult("perf_formulas", False, "t_calc != t_mem at balanced batch size")
    return CheckResult("perf_formulas", True)


def run_selftest(seed: int = 0) -> list[CheckResult]:
    """Run every embedded check with a deterministic seed."""
    rng = np.random.default_rng(seed)
    return [
        _check_q78_round_trip(),
        _check_mul_exact(rng),
        _check_plan_sigmoid(),
        _check_codec_round_trip(rng),
        _check_golden_stream(),
        _check_batch_equivalence(rng),
        _check_sparse_equivalence(rng),
        _check_batch_cycles(rng),
        _check_perf_formulas(),
    ]
