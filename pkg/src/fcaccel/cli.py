"""Command-line front end: infer / prune / perf / selftest.

Every subcommand prints deterministic key=value lines (no timestamps), so
identical invocations produce byte-identical output. Errors exit with code
2 and a single machine-parseable ``ERROR <kind>: <message>`` line on
stderr; a failed selftest exits 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import engine, fxp, perf, prune, selftest
from .errors import EmptyDataset, EmulatorError
from .model import (
    ActivationKind,
    Dataset,
    DenseLayer,
    NetworkModel,
    load_csv_vectors,
    load_idx,
    load_model,
)


def _engine_config(args: argparse.Namespace) -> engine.EngineConfig:
    return engine.EngineConfig(
        units=args.units,
        tuples=args.tuples,
        batch_size=args.batch_size,
        clock_hz=args.fpu_hz,
        mem_bytes_per_sec=args.mem_bytes_per_sec,
        weight_bits=args.weight_bits,
        act_cycles=args.act_cycles,
    )


def _add_engine_flags(sub: argparse.ArgumentParser, tuples_default: int = 3) -> None:
    sub.add_argument("--units", type=int, default=114,
                     help="parallel row processors (default 114)")
    sub.add_argument("--tuples", type=int, default=tuples_default,
                     help="resources per processor: stream tuples consumed per "
                          f"cycle on the sparse path (default {tuples_default})")
    sub.add_argument("--batch-size", type=int, default=1,
                     help="samples per batch (default 1)")
    sub.add_argument("--fpu-hz", type=float, default=100e6,
                     help="processing clock in Hz (default 1e8)")
    sub.add_argument("--mem-bytes-per-sec", type=float, default=1.801e9,
                     help="effective memory throughput in bytes/s (default 1.801e9)")
    sub.add_argument("--weight-bits", type=int, default=16,
                     help="stored weight size in bits (default 16)")
    sub.add_argument("--act-cycles", type=int, default=1,
                     help="activation function latency in cycles (default 1)")


def _make_demo_model(arch: list[int], rng: np.random.Generator) -> NetworkModel:
    layers = []
    for i in range(len(arch) - 1):
        raw = fxp.quantize_vec(rng.normal(0.0, 0.5, size=(arch[i + 1], arch[i])))
        kind = ActivationKind.RELU if i < len(arch) - 2 else ActivationKind.IDENTITY
        layers.append(DenseLayer(raw, kind))
    return NetworkModel(layers)


def _load_dataset(args: argparse.Namespace, model: NetworkModel,
                  rng: np.random.Generator) -> Dataset:
    if args.csv:
        return load_csv_vectors(args.csv, model.layers[0].in_width)
    if args.images:
        return load_idx(args.images, args.labels, scale=args.scale)
    # seeded demo input so the command works without data files
    samples = fxp.quantize_vec(
        rng.normal(0.0, 1.0, size=(args.demo_samples, model.layers[0].in_width))
    )
    return Dataset(samples, None)


def _modeled_network(widths: list[int], fractions: list[float], overhead: float,
                     total: int, cfg: engine.EngineConfig, tuples: int) -> dict:
    """Per-layer analytic reports for the whole network, plus totals."""
    layers = []
    t_total = 0.0
    cycles_total = 0
    macs_per_sample = 0.0
    for j in range(len(widths) - 1):
        p = perf.PerfParams(
            in_width=widths[j],
            out_width=widths[j + 1],
            total_samples=total,
            batch_size=cfg.batch_size,
            units=cfg.units,
            tuples=tuples,
            clock_hz=cfg.clock_hz,
            mem_bytes_per_sec=cfg.mem_bytes_per_sec,
            weight_bits=cfg.weight_bits,
            prune_fraction=fractions[j],
            pack_overhead=overhead,
        )
        rep = perf.make_report(p)
        layers.append(rep)
        t_total += rep.t_proc
        cycles_total += rep.cycles
        macs_per_sample += widths[j] * widths[j + 1] * (1.0 - fractions[j])
    dense_macs = sum(widths[j] * widths[j + 1] for j in range(len(widths) - 1))
    actual = macs_per_sample * total / t_total if t_total > 0 else 0.0
    effective = dense_macs * total / t_total if t_total > 0 else 0.0
    return {
        "layers": layers,
        "t_proc_total": t_total,
        "cycles_total": cycles_total,
        "per_sample_s": t_total / total,
        "gops_actual": actual,
        "gops_effective": effective,
        "n_opt": layers[0].n_opt if layers else 0.0,
    }


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def cmd_infer(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    if args.model:
        model = load_model(args.model)
        model_name = str(args.model)
    else:
        arch = [int(w) for w in args.demo_arch.split("x")]
        model = _make_demo_model(arch, rng)
        model_name = f"demo(seed={args.seed})"
    dataset = _load_dataset(args, model, rng)
    if args.limit is not None:
        dataset = Dataset(dataset.samples[: args.limit],
                          None if dataset.labels is None else dataset.labels[: args.limit])
    if len(dataset) == 0:
        raise EmptyDataset("no samples to evaluate")
    cfg = _engine_config(args)

    lines = [
        f"model={model_name}",
        f"arch={model.arch}",
        f"engine={args.engine}",
        f"samples={len(dataset)}",
        f"seed={args.seed}",
    ]

    fractions = [0.0] * len(model.layers)
    overhead = 1.0
    tuples = 1
    pm = None
    if args.engine == "sparse":
        if args.delta is None:
            raise EmulatorError("sparse engine needs --delta")
        pm = prune.prune_model(model, args.delta)
        fractions = [pl.q_prune for pl in pm.layers]
        overhead = prune.overhead_factor(prune.TUPLES_PER_WORD, cfg.weight_bits)
        tuples = cfg.tuples
        lines.append(f"delta={args.delta}")
        for j, pl in enumerate(pm.layers):
            lines.append(f"q_prune_layer{j}={pl.q_prune}")
            lines.append(f"q_prune_stored_layer{j}={pl.q_prune_stored}")
        lines.append(f"q_prune_overall={pm.q_prune_overall}")

    predictions: list[int] = []
    emulated_cycles = 0
    if args.engine == "sparse":
        for i in range(len(dataset)):
            run = engine.infer_sparse(pm, dataset.samples[i], cfg)
            predictions.append(engine.classify(run.output))
            emulated_cycles += run.total_cycles
    elif args.engine == "batch":
        n = cfg.batch_size
        lines.append(f"batch_size={n}")
        for lo in range(0, len(dataset), n):
            chunk = dataset.samples[lo : lo + n]
            pad = n - len(chunk)
            if pad:
                chunk = np.vstack([chunk, np.tile(chunk[-1], (pad, 1))])
            run = engine.infer_batch(model, chunk, cfg)
            predictions.extend(engine.classify(o) for o in run.outputs[: n - pad])
            emulated_cycles += run.total_cycles
    else:
        for i in range(len(dataset)):
            predictions.append(engine.classify(engine.infer_reference(model, dataset.samples[i])))
        emulated_cycles = len(dataset) * sum(
            engine.batch_layer_cycles(l.out_width, l.in_width,
                                      engine.EngineConfig(units=cfg.units, batch_size=1,
                                                          act_cycles=cfg.act_cycles))
            for l in model.layers
        )

    if dataset.labels is not None:
        correct = sum(int(p == t) for p, t in zip(predictions, dataset.labels.tolist()))
        lines.append(f"accuracy={correct / len(dataset)}")

    modeled = _modeled_network(
        model.widths, fractions, overhead, len(dataset), cfg, tuples
    )
    lines.append(f"cycles_emulated={emulated_cycles}")
    lines.append(f"cycles_modeled={modeled['cycles_total']}")
    lines.append(f"modeled_time_per_sample_ms={modeled['per_sample_s'] * 1e3}")
    lines.append(f"modeled_gops_actual={modeled['gops_actual'] / 1e9}")
    lines.append(f"modeled_gops_effective={modeled['gops_effective'] / 1e9}")
    lines.append(f"n_opt={modeled['n_opt']}")
    print("\n".join(lines))

    if args.out:
        doc = {
            "command": "infer",
            "model": model_name,
            "arch": model.arch,
            "engine": args.engine,
            "seed": args.seed,
            "samples": len(dataset),
            "predictions": predictions,
            "cycles_emulated": emulated_cycles,
            "modeled": {
                "cycles": modeled["cycles_total"],
                "time_per_sample_ms": modeled["per_sample_s"] * 1e3,
                "gops_actual": modeled["gops_actual"] / 1e9,
                "gops_effective": modeled["gops_effective"] / 1e9,
                "n_opt": modeled["n_opt"],
                "per_layer": [r.as_dict() for r in modeled["layers"]],
            },
        }
        if dataset.labels is not None:
            doc["accuracy"] = correct / len(dataset)
        if args.engine == "sparse":
            doc["delta"] = args.delta
            doc["q_prune_per_layer"] = fractions
            doc["q_prune_overall"] = pm.q_prune_overall
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        if args.plot:
            from . import plotting

            stem = Path(args.out).with_suffix("")
            labels = [f"L{j}" for j in range(len(model.layers))]
            plotting.save_layer_bars(
                labels,
                [r.t_proc * 1e3 for r in modeled["layers"]],
                "modeled time (ms)",
                f"{stem}_layers.png",
            )
    return 0


# ---------------------------------------------------------------------------
# prune
# ---------------------------------------------------------------------------

def cmd_prune(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    pm = prune.prune_model(model, args.delta)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmulatorError(f"cannot create output directory: {exc}") from exc

    lines = [
        f"model={args.model}",
        f"arch={model.arch}",
        f"delta={args.delta}",
    ]
    summary: list[dict] = []
    for j, pl in enumerate(pm.layers):
        path = out_dir / f"layer_{j:02d}.nnsp"
        prune.write_nnsp(pl, path)
        dense_count = pl.row_count * pl.input_width
        lines.append(
            f"layer{j}: rows={pl.row_count} width={pl.input_width} "
            f"q_prune={pl.q_prune} q_prune_stored={pl.q_prune_stored} "
            f"stored_tuples={pl.stored_tuples} file={path.name}"
        )
        summary.append({
            "layer": j,
            "file": path.name,
            "rows": pl.row_count,
            "input_width": pl.input_width,
            "dense_weights": dense_count,
            "q_prune": pl.q_prune,
            "q_prune_stored": pl.q_prune_stored,
            "stored_tuples": pl.stored_tuples,
            "row_pruning_factors": pl.row_pruning_factors,
        })
    lines.append(f"q_prune_overall={pm.q_prune_overall}")
    lines.append(
        f"pack_overhead={prune.overhead_factor(prune.TUPLES_PER_WORD, 16)}"
    )
    print("\n".join(lines))

    (out_dir / "summary.json").write_text(
        json.dumps({
            "command": "prune",
            "model": str(args.model),
            "arch": model.arch,
            "delta": args.delta,
            "q_prune_overall": pm.q_prune_overall,
            "layers": summary,
        }, indent=2) + "\n",
        encoding="utf-8",
    )
    if args.plot:
        from . import plotting

        plotting.save_prune_figure(
            [pl.row_pruning_factors for pl in pm.layers],
            [pl.q_prune for pl in pm.layers],
            out_dir / "pruning.png",
        )
    return 0


# ---------------------------------------------------------------------------
# perf
# ---------------------------------------------------------------------------

_DEFAULT_SWEEPS = {
    "batch_size": [1, 2, 4, 8, 16, 32],
    "units": [1, 2, 4, 8, 16, 32, 64, 114, 128],
    "tuples": [1, 2, 3, 4],
    "prune_fraction": [0.0, 0.25, 0.5, 0.72, 0.9],
}


def cmd_perf(args: argparse.Namespace) -> int:
    base = perf.PerfParams(
        in_width=args.in_width,
        out_width=args.out_width,
        total_samples=args.samples,
        batch_size=args.batch_size,
        units=args.units,
        tuples=args.tuples,
        clock_hz=args.fpu_hz,
        mem_bytes_per_sec=args.mem_bytes_per_sec,
        weight_bits=args.weight_bits,
        prune_fraction=args.q_prune,
        pack_overhead=args.q_overhead,
    )

    if not args.sweep:
        rep = perf.make_report(base)
        print("\n".join(rep.lines()))
        print(f"recommended_batch_size={int(np.ceil(rep.n_opt))}")
        if args.out:
            Path(args.out).write_text(
                json.dumps(rep.as_dict(), indent=2) + "\n", encoding="utf-8"
            )
        return 0

    axis = perf.resolve_axis(args.sweep)
    if args.sweep_values:
        caster = float if axis in ("prune_fraction", "pack_overhead", "clock_hz",
                                   "mem_bytes_per_sec", "batch_size") else int
        values = [caster(v) for v in args.sweep_values.split(",")]
    else:
        values = _DEFAULT_SWEEPS.get(axis, [1, 2, 4, 8, 16, 32])
    sw = perf.sweep(base, axis, values)

    rows = sw.csv_rows()
    widths = [max(len(str(r[c])) for r in rows) for c in range(len(rows[0]))]
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    print(f"n_opt={sw.reports[0].n_opt}")
    print(f"recommended_batch_size={int(np.ceil(sw.reports[0].n_opt))}")
    for key, val in sorted(sw.diagnostics().items()):
        print(f"diag_{key}={val}")

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
        if args.plot:
            from . import plotting

            stem = Path(args.out).with_suffix("")
            plotting.save_sweep_figure(sw, f"{stem}_times.png")
            plotting.save_latency_figure(sw, f"{stem}_latency.png")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_selftest(seed=args.seed)
    for res in results:
        tag = "PASS" if res.ok else "FAIL"
        suffix = f": {res.detail}" if (res.detail and not res.ok) else ""
        print(f"[{tag}] {res.name}{suffix}")
    passed = sum(r.ok for r in results)
    print(f"selftest: {passed}/{len(results)} checks passed")
    return 0 if passed == len(results) else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcaccel",
        description="Bit-exact Q7.8 fully-connected inference emulator with "
                    "batch and pruned-stream datapaths and an analytical "
                    "throughput model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_infer = sub.add_parser("infer", help="run a model over a dataset")
    p_infer.add_argument("--model", help="NNSM model container")
    p_infer.add_argument("--demo-arch", default="16x12x4",
                         help="architecture for a seeded demo model when --model is absent")
    p_infer.add_argument("--images", help="IDX image tensor")
    p_infer.add_argument("--labels", help="IDX label vector")
    p_infer.add_argument("--csv", help="CSV dataset (optional trailing label column)")
    p_infer.add_argument("--scale", type=float, default=1.0 / 255.0,
                         help="pixel scale for IDX ingestion (default 1/255)")
    p_infer.add_argument("--engine", choices=["reference", "batch", "sparse"],
                         default="reference")
    p_infer.add_argument("--delta", type=float, default=None,
                         help="pruning threshold (required for --engine sparse)")
    p_infer.add_argument("--limit", type=int, default=None,
                         help="evaluate at most this many samples")
    p_infer.add_argument("--demo-samples", type=int, default=32,
                         help="sample count for the seeded demo dataset")
    p_infer.add_argument("--seed", type=int, default=0)
    p_infer.add_argument("--out", help="write a JSON report here")
    p_infer.add_argument("--plot", action="store_true",
                         help="render figures next to --out")
    _add_engine_flags(p_infer)
    p_infer.set_defaults(func=cmd_infer)

    p_prune = sub.add_parser("prune", help="prune a model into NNSP stream files")
    p_prune.add_argument("--model", required=True)
    p_prune.add_argument("--delta", type=float, required=True)
    p_prune.add_argument("--out", required=True, help="output directory")
    p_prune.add_argument("--plot", action="store_true",
                         help="render pruning-factor figure into --out")
    p_prune.set_defaults(func=cmd_prune)

    p_perf = sub.add_parser("perf", help="evaluate the analytical model")
    p_perf.add_argument("--in-width", type=int, default=784)
    p_perf.add_argument("--out-width", type=int, default=800)
    p_perf.add_argument("--samples", type=int, default=10000)
    p_perf.add_argument("--q-prune", type=float, default=0.0)
    p_perf.add_argument("--q-overhead", type=float, default=1.0)
    p_perf.add_argument("--sweep", help="parameter to sweep (e.g. batch_size, n, units)")
    p_perf.add_argument("--sweep-values", help="comma-separated sweep values")
    p_perf.add_argument("--out", help="write the sweep table as CSV here")
    p_perf.add_argument("--plot", action="store_true",
                        help="render figures next to --out")
    # the dense batch datapath has one MAC per unit, so the model defaults to r=1
    _add_engine_flags(p_perf, tuples_default=1)
    p_perf.set_defaults(func=cmd_perf)

    p_self = sub.add_parser("selftest", help="run the embedded invariant suite")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmulatorError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
