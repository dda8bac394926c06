"""CLI subcommands: wiring, error exits, determinism, and rendered outputs."""

import csv
import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from fcaccel import fxp
from fcaccel.cli import main
from fcaccel.engine import infer_reference
from fcaccel.model import ActivationKind, DenseLayer, NetworkModel, save_model
from fcaccel import selftest

EXAMPLE_ROW = [0.0, -1.5, 0.0, 0.0, 0.3, -0.17, 0.0, 0.0, 0.0, 1.1, 0.0, 0.0, -0.2, 0.0, 0.1]
EXAMPLE_WORDS = (0x03FF504009A1FE80, 0x0400685FF9A3011A)


@pytest.fixture
def tiny_model(tmp_path):
    rng = np.random.default_rng(9)
    layers = [
        DenseLayer(fxp.quantize_vec(rng.normal(0, 0.5, size=(10, 6))), ActivationKind.RELU),
        DenseLayer(fxp.quantize_vec(rng.normal(0, 0.5, size=(3, 10))), ActivationKind.IDENTITY),
    ]
    model = NetworkModel(layers)
    path = tmp_path / "tiny.nnsm"
    save_model(model, path)
    return model, path


@pytest.fixture
def tiny_csv(tmp_path, tiny_model):
    model, _ = tiny_model
    rng = np.random.default_rng(10)
    samples = fxp.quantize_vec(rng.normal(0, 1.0, size=(11, 6)))
    lines = []
    for s in samples:
        label = int(np.argmax(infer_reference(model, s)))
        lines.append(",".join(str(v / 256.0) for v in s.tolist()) + f",{label}")
    path = tmp_path / "data.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def test_infer_reference_with_labels(capsys, tiny_model, tiny_csv):
    _, mpath = tiny_model
    rc, out, err = run_cli(capsys, "infer", "--model", str(mpath), "--csv", str(tiny_csv))
    assert rc == 0 and err == ""
    assert "accuracy=1.0" in out
    assert "arch=6x10x3" in out
    assert "cycles_emulated=" in out and "modeled_time_per_sample_ms=" in out


def test_infer_batch_writes_predictions(capsys, tmp_path, tiny_model, tiny_csv):
    _, mpath = tiny_model
    report = tmp_path / "report.json"
    rc, out, _ = run_cli(
        capsys, "infer", "--model", str(mpath), "--csv", str(tiny_csv),
        "--engine", "batch", "--batch-size", "4", "--units", "3",
        "--out", str(report),
    )
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["engine"] == "batch"
    assert len(doc["predictions"]) == 11
    assert doc["accuracy"] == 1.0
    assert doc["modeled"]["per_layer"]


def test_infer_engines_agree_on_predictions(capsys, tmp_path, tiny_model, tiny_csv):
    _, mpath = tiny_model
    preds = {}
    for engine in ("reference", "batch", "sparse"):
        report = tmp_path / f"{engine}.json"
        argv = ["infer", "--model", str(mpath), "--csv", str(tiny_csv),
                "--engine", engine, "--out", str(report)]
        if engine == "batch":
            argv += ["--batch-size", "4", "--units", "5"]
        if engine == "sparse":
            argv += ["--delta", "0.0", "--units", "3"]
        rc, _, _ = run_cli(capsys, *argv)
        assert rc == 0
        preds[engine] = json.loads(report.read_text())["predictions"]
    # delta=0 prunes only exact zeros, so all three engines classify alike
    assert preds["reference"] == preds["batch"] == preds["sparse"]


def test_infer_sparse_reports_pruning(capsys, tiny_model, tiny_csv):
    _, mpath = tiny_model
    rc, out, _ = run_cli(
        capsys, "infer", "--model", str(mpath), "--csv", str(tiny_csv),
        "--engine", "sparse", "--delta", "0.1", "--units", "4",
    )
    assert rc == 0
    assert "q_prune_layer0=" in out and "q_prune_layer1=" in out
    assert "q_prune_overall=" in out


def test_infer_sparse_without_delta_fails(capsys, tiny_model):
    _, mpath = tiny_model
    rc, _, err = run_cli(capsys, "infer", "--model", str(mpath), "--engine", "sparse")
    assert rc == 2
    assert err.startswith("ERROR EmulatorError:")


def test_infer_missing_model(capsys, tmp_path):
    rc, _, err = run_cli(capsys, "infer", "--model", str(tmp_path / "nope.nnsm"))
    assert rc == 2
    assert err.startswith("ERROR MalformedContainer:")


def test_infer_idx_flags(capsys, tmp_path, tiny_model):
    model, mpath = tiny_model
    rng = np.random.default_rng(12)
    pixels = rng.integers(0, 256, size=(6, 2, 3), dtype=np.uint8)   # width 6
    labels = []
    for img in pixels:
        sample = fxp.quantize_vec(img.reshape(-1).astype(np.float64) / 255.0)
        labels.append(int(np.argmax(infer_reference(model, sample))))
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ip.write_bytes(struct.pack(">IIII", 0x803, 6, 2, 3) + pixels.tobytes())
    lp.write_bytes(struct.pack(">II", 0x801, 6) + bytes(labels))
    rc, out, _ = run_cli(capsys, "infer", "--model", str(mpath),
                         "--images", str(ip), "--labels", str(lp))
    assert rc == 0
    assert "samples=6" in out and "accuracy=1.0" in out


def test_infer_demo_deterministic(capsys):
    rc1, out1, _ = run_cli(capsys, "infer", "--engine", "batch", "--batch-size", "8",
                           "--units", "6", "--seed", "3")
    rc2, out2, _ = run_cli(capsys, "infer", "--engine", "batch", "--batch-size", "8",
                           "--units", "6", "--seed", "3")
    assert rc1 == rc2 == 0
    assert out1 == out2
    assert "seed=3" in out1


def test_infer_plot(capsys, tmp_path, tiny_model, tiny_csv):
    _, mpath = tiny_model
    report = tmp_path / "r.json"
    rc, _, _ = run_cli(
        capsys, "infer", "--model", str(mpath), "--csv", str(tiny_csv),
        "--out", str(report), "--plot",
    )
    assert rc == 0
    assert (tmp_path / "r_layers.png").exists()


# ---------------------------------------------------------------------------
# prune
# ---------------------------------------------------------------------------

def test_prune_writes_streams_and_summary(capsys, tmp_path, tiny_model):
    _, mpath = tiny_model
    out_dir = tmp_path / "pruned"
    rc, out, _ = run_cli(capsys, "prune", "--model", str(mpath),
                         "--delta", "0.2", "--out", str(out_dir))
    assert rc == 0
    assert (out_dir / "layer_00.nnsp").exists()
    assert (out_dir / "layer_01.nnsp").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["delta"] == 0.2
    assert len(summary["layers"]) == 2
    for entry in summary["layers"]:
        assert 0.0 <= entry["q_prune"] <= 1.0
        assert len(entry["row_pruning_factors"]) == entry["rows"]
    assert "q_prune_overall=" in out


def test_prune_golden_stream_bytes(capsys, tmp_path):
    # the worked-example row model produces the frozen NNSP stream bytes
    layer = DenseLayer(fxp.quantize_vec(np.array([EXAMPLE_ROW])), ActivationKind.IDENTITY)
    mpath = tmp_path / "row.nnsm"
    save_model(NetworkModel([layer]), mpath)
    out_dir = tmp_path / "out"
    rc, _, _ = run_cli(capsys, "prune", "--model", str(mpath),
                       "--delta", "0.05", "--out", str(out_dir))
    assert rc == 0
    expect = b"NNSP\x01" + struct.pack("<II", 1, 15) + struct.pack("<I", 6)
    expect += struct.pack("<QQ", *EXAMPLE_WORDS)
    assert (out_dir / "layer_00.nnsp").read_bytes() == expect


def test_prune_everything(capsys, tmp_path, tiny_model):
    _, mpath = tiny_model
    out_dir = tmp_path / "all"
    rc, out, _ = run_cli(capsys, "prune", "--model", str(mpath),
                         "--delta", "1000.0", "--out", str(out_dir))
    assert rc == 0
    assert "q_prune_overall=1.0" in out


def test_prune_plot(capsys, tmp_path, tiny_model):
    _, mpath = tiny_model
    out_dir = tmp_path / "plots"
    rc, _, _ = run_cli(capsys, "prune", "--model", str(mpath),
                       "--delta", "0.2", "--out", str(out_dir), "--plot")
    assert rc == 0
    assert (out_dir / "pruning.png").exists()


# ---------------------------------------------------------------------------
# perf
# ---------------------------------------------------------------------------

def test_perf_defaults_reproduce_n_opt(capsys):
    rc, out, _ = run_cli(capsys, "perf")
    assert rc == 0
    nopt = float(next(l for l in out.splitlines() if l.startswith("n_opt=")).split("=")[1])
    assert abs(nopt - 12.66) <= 0.01
    assert "recommended_batch_size=13" in out


def test_perf_sweep_csv_and_plots(capsys, tmp_path):
    out_csv = tmp_path / "sweep.csv"
    rc, out, _ = run_cli(capsys, "perf", "--sweep", "n",
                         "--sweep-values", "1,2,4,8,16,32",
                         "--out", str(out_csv), "--plot")
    assert rc == 0
    with open(out_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "batch_size"
    assert len(rows) == 7
    procs = [float(r[4]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(procs, procs[1:]))
    assert (tmp_path / "sweep_times.png").exists()
    assert (tmp_path / "sweep_latency.png").exists()
    assert "diag_t_proc_nonincreasing=True" in out


def test_perf_sweep_unknown_axis(capsys):
    rc, _, err = run_cli(capsys, "perf", "--sweep", "warp")
    assert rc == 2
    assert err.startswith("ERROR UnknownAxis:")


def test_perf_deterministic_bytes(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rc1, out1, _ = run_cli(capsys, "perf", "--sweep", "n", "--out", str(a), "--plot")
    rc2, out2, _ = run_cli(capsys, "perf", "--sweep", "n", "--out", str(b), "--plot")
    assert rc1 == rc2 == 0
    assert out1 == out2
    assert a.read_bytes() == b.read_bytes()
    # rendered figures are byte-identical too (fixed PNG metadata)
    assert (tmp_path / "a_times.png").read_bytes() == (tmp_path / "b_times.png").read_bytes()
    assert (tmp_path / "a_latency.png").read_bytes() == (tmp_path / "b_latency.png").read_bytes()


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def test_selftest_passes(capsys):
    rc, out, _ = run_cli(capsys, "selftest")
    assert rc == 0
    assert "[PASS] golden_stream" in out
    assert out.strip().endswith("9/9 checks passed")


def test_selftest_deterministic(capsys):
    rc1, out1, _ = run_cli(capsys, "selftest")
    rc2, out2, _ = run_cli(capsys, "selftest")
    assert out1 == out2


def test_selftest_catches_corrupted_golden(capsys, monkeypatch):
    corrupted = (EXAMPLE_WORDS[0] ^ 0x40, EXAMPLE_WORDS[1])
    monkeypatch.setattr(selftest, "GOLDEN_ROW_WORDS", corrupted)
    rc, out, _ = run_cli(capsys, "selftest")
    assert rc == 1
    assert "[FAIL] golden_stream" in out
    assert "8/9 checks passed" in out


# ---------------------------------------------------------------------------
# console entry point
# ---------------------------------------------------------------------------

def test_console_script_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "fcaccel.cli", "perf"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "n_opt=" in proc.stdout
