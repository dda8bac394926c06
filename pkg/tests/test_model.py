"""Activations, model container round-trips, and dataset loaders."""

import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcaccel import fxp
from fcaccel.errors import (
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
from fcaccel.model import (
    SIGMOID_SEGMENTS,
    ActivationKind,
    DenseLayer,
    NetworkModel,
    apply_activation,
    apply_activation_vec,
    load_csv_vectors,
    load_idx,
    load_model,
    relu,
    save_model,
    sigmoid_plan,
    sigmoid_plan_vec,
)

ACC_RANGE = st.integers(min_value=fxp.ACC_MIN, max_value=fxp.ACC_MAX)


# ---------------------------------------------------------------------------
# relu
# ---------------------------------------------------------------------------

def test_relu_examples():
    assert relu(fxp.acc_from_real(-3.25)) == 0
    assert relu(0) == 0
    assert relu(fxp.acc_from_real(7.125)) == fxp.acc_from_real(7.125)


@given(ACC_RANGE)
def test_relu_idempotent_nonnegative(x):
    assert relu(relu(x)) == relu(x)
    assert relu(x) >= 0


# ---------------------------------------------------------------------------
# piecewise-linear sigmoid
# ---------------------------------------------------------------------------

def test_sigmoid_segment_table_pinned():
    # breakpoints 1, 2.375, 5 and slopes 1/4, 1/8, 1/32; intercepts
    # 0.5, 0.625, 0.84375 -- all exact Q15.16 constants
    assert SIGMOID_SEGMENTS == (
        (65536, 2, 32768),
        (155648, 3, 40960),
        (327680, 5, 55296),
    )


def test_sigmoid_examples():
    assert sigmoid_plan(0) == fxp.acc_from_real(0.5)
    assert sigmoid_plan(5 * fxp.ACC_ONE) == fxp.ACC_ONE
    # the saturated segment sits within 0.007 of the true sigmoid at 5
    assert abs(1.0 - 1.0 / (1.0 + math.exp(-5.0))) <= 0.007
    # -1.0 -> 1 - (0.125*1 + 0.625) = 0.25 via the symmetry rule
    assert sigmoid_plan(-fxp.ACC_ONE) == fxp.acc_from_real(0.25)


@given(ACC_RANGE)
def test_sigmoid_symmetry_exact(x):
    assert sigmoid_plan(-x) == fxp.ACC_ONE - sigmoid_plan(x)


def _true_sigmoid(raw):
    return 1.0 / (1.0 + math.exp(-raw / fxp.ACC_ONE))


def test_sigmoid_fidelity_grid():
    worst = 0.0
    for raw in range(-8 * fxp.ACC_ONE, 8 * fxp.ACC_ONE + 1, 256):
        worst = max(worst, abs(sigmoid_plan(raw) / fxp.ACC_ONE - _true_sigmoid(raw)))
    assert worst <= 0.02


def test_sigmoid_monotone_within_segments():
    # The published segment table has one small downward step where the
    # third segment starts (|x| = 2.375): 0.921875 drops to 0.91796875, and
    # the mirror step appears crossing -2.375. Pin both steps and require
    # monotonicity everywhere else.
    step_at = 0x26000  # 2.375 as a Q15.16 raw; multiple of the 256 grid step
    prev = sigmoid_plan(-8 * fxp.ACC_ONE)
    for raw in range(-8 * fxp.ACC_ONE + 256, 8 * fxp.ACC_ONE + 1, 256):
        cur = sigmoid_plan(raw)
        if raw == step_at or raw == -step_at + 256:
            assert 0 < prev - cur <= 256  # the step is tiny (< 0.004)
        else:
            assert cur >= prev, f"non-monotone at raw {raw}"
        prev = cur
    assert sigmoid_plan(step_at - 1) - sigmoid_plan(step_at) == 255


@given(st.lists(ACC_RANGE, min_size=1, max_size=64))
@settings(max_examples=200)
def test_sigmoid_vec_matches_scalar(xs):
    vec = sigmoid_plan_vec(np.array(xs, dtype=np.int64))
    assert vec.tolist() == [sigmoid_plan(x) for x in xs]


# ---------------------------------------------------------------------------
# apply_activation
# ---------------------------------------------------------------------------

def test_apply_activation_examples():
    assert apply_activation(ActivationKind.RELU, fxp.acc_from_real(-1.0)) == 0
    assert apply_activation(ActivationKind.SIGMOID_PLAN, 0) == fxp.from_real(0.5)
    assert apply_activation(ActivationKind.IDENTITY, fxp.acc_from_real(1.25)) == fxp.from_real(1.25)


@given(st.lists(ACC_RANGE, min_size=1, max_size=32),
       st.sampled_from(list(ActivationKind)))
@settings(max_examples=150)
def test_apply_activation_vec_matches_scalar(xs, kind):
    vec = apply_activation_vec(kind, np.array(xs, dtype=np.int64))
    assert vec.tolist() == [apply_activation(kind, x) for x in xs]


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------

def _random_model(rng, widths, kinds=None):
    layers = []
    all_kinds = list(ActivationKind)
    for i in range(len(widths) - 1):
        w = rng.integers(fxp.Q78_MIN, fxp.Q78_MAX + 1, size=(widths[i + 1], widths[i]))
        kind = kinds[i] if kinds else all_kinds[int(rng.integers(3))]
        layers.append(DenseLayer(w.astype(np.int16), kind))
    return NetworkModel(layers)


def test_container_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    for widths in ([784, 800, 10], [5, 9, 7, 3], [1, 1]):
        model = _random_model(rng, widths)
        p1, p2 = tmp_path / "a.nnsm", tmp_path / "b.nnsm"
        save_model(model, p1)
        loaded = load_model(p1)
        assert loaded.arch == model.arch
        for la, lb in zip(model.layers, loaded.layers):
            assert la.activation == lb.activation
            assert np.array_equal(la.weights, lb.weights)
        save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()


def test_container_valid_two_layer(tmp_path):
    model = _random_model(np.random.default_rng(0), [784, 800, 10])
    path = tmp_path / "m.nnsm"
    save_model(model, path)
    loaded = load_model(path)
    assert len(loaded.layers) == 2
    assert loaded.widths == [784, 800, 10]


def test_container_dimension_mismatch(tmp_path):
    # hand-build a container whose second matrix does not chain
    buf = bytearray(b"NNSM\x01\x02")
    buf += struct.pack("<II", 3, 4) + b"\x00" + b"\x00" * (3 * 4 * 2)
    buf += struct.pack("<II", 2, 5) + b"\x00" + b"\x00" * (2 * 5 * 2)
    path = tmp_path / "bad.nnsm"
    path.write_bytes(bytes(buf))
    with pytest.raises(DimensionMismatch):
        load_model(path)


def test_container_truncated(tmp_path):
    model = _random_model(np.random.default_rng(1), [6, 4])
    path = tmp_path / "t.nnsm"
    save_model(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(MalformedContainer):
        load_model(path)


def test_container_bad_magic(tmp_path):
    path = tmp_path / "x.nnsm"
    path.write_bytes(b"XXXX" + b"\x01\x01" + b"\x00" * 32)
    with pytest.raises(MalformedContainer):
        load_model(path)


def test_container_bad_version(tmp_path):
    model = _random_model(np.random.default_rng(2), [3, 2])
    path = tmp_path / "v.nnsm"
    save_model(model, path)
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(UnsupportedVersion):
        load_model(path)


def test_container_missing_file(tmp_path):
    with pytest.raises(MalformedContainer):
        load_model(tmp_path / "nope.nnsm")


def test_save_to_unwritable_path(tmp_path):
    model = _random_model(np.random.default_rng(4), [3, 2])
    with pytest.raises(IoFailure):
        save_model(model, tmp_path)  # a directory is not a writable file


def test_network_model_validates_chain():
    rng = np.random.default_rng(5)
    a = DenseLayer(rng.integers(-5, 5, size=(4, 3)).astype(np.int16), ActivationKind.RELU)
    b = DenseLayer(rng.integers(-5, 5, size=(2, 5)).astype(np.int16), ActivationKind.RELU)
    with pytest.raises(DimensionMismatch):
        NetworkModel([a, b])
    with pytest.raises(DimensionMismatch):
        NetworkModel([])


# ---------------------------------------------------------------------------
# IDX loader
# ---------------------------------------------------------------------------

def _idx_images_bytes(pixels):
    arr = np.asarray(pixels, dtype=np.uint8)
    count, rows, cols = arr.shape
    return struct.pack(">IIII", 0x803, count, rows, cols) + arr.tobytes()


def _idx_labels_bytes(labels):
    arr = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, len(arr)) + arr.tobytes()


def test_idx_loader_values(tmp_path):
    pixels = np.array(
        [[[0, 255], [128, 1]], [[7, 70], [200, 255]], [[3, 3], [3, 3]]], dtype=np.uint8
    )
    labels = [1, 0, 2]
    ip = tmp_path / "img.idx"
    lp = tmp_path / "lab.idx"
    ip.write_bytes(_idx_images_bytes(pixels))
    lp.write_bytes(_idx_labels_bytes(labels))
    ds = load_idx(ip, lp)
    assert len(ds) == 3 and ds.width == 4
    assert ds.labels.tolist() == labels
    # every pixel goes through the documented quantizer at scale 1/255
    for i in range(3):
        expect = [fxp.from_real(p * (1.0 / 255.0)) for p in pixels[i].ravel().tolist()]
        assert ds.samples[i].tolist() == expect
    # pixel 255 at the default scale is exactly 1.0 -> raw 0x0100
    assert ds.samples[0][1] == 0x0100


def test_idx_without_labels(tmp_path):
    ip = tmp_path / "img.idx"
    ip.write_bytes(_idx_images_bytes(np.zeros((2, 3, 3), dtype=np.uint8)))
    ds = load_idx(ip)
    assert len(ds) == 2 and ds.labels is None


def test_idx_test_set_scale(tmp_path):
    # a 10,000-image file of 28x28 pixels flattens to samples of length 784
    rng = np.random.default_rng(8)
    pixels = rng.integers(0, 256, size=(10_000, 28, 28), dtype=np.uint8)
    ip = tmp_path / "t10k.idx"
    lp = tmp_path / "t10k-labels.idx"
    ip.write_bytes(_idx_images_bytes(pixels))
    lp.write_bytes(_idx_labels_bytes(rng.integers(0, 10, size=10_000, dtype=np.uint8)))
    ds = load_idx(ip, lp)
    assert len(ds) == 10_000
    assert ds.width == 784
    assert len(ds.labels) == 10_000


def test_idx_bad_magic(tmp_path):
    ip = tmp_path / "img.idx"
    lp = tmp_path / "lab.idx"
    ip.write_bytes(_idx_images_bytes(np.zeros((1, 2, 2), dtype=np.uint8)))
    # labels file carrying the image magic
    lp.write_bytes(struct.pack(">II", 0x803, 1) + b"\x00")
    with pytest.raises(BadMagic):
        load_idx(ip, lp)
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0x801, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(BadMagic):
        load_idx(bad)


def test_idx_count_mismatch(tmp_path):
    ip = tmp_path / "img.idx"
    lp = tmp_path / "lab.idx"
    ip.write_bytes(_idx_images_bytes(np.zeros((2, 2, 2), dtype=np.uint8)))
    lp.write_bytes(_idx_labels_bytes([1, 0, 1]))
    with pytest.raises(CountMismatch):
        load_idx(ip, lp)


def test_idx_truncated(tmp_path):
    ip = tmp_path / "img.idx"
    full = _idx_images_bytes(np.zeros((4, 5, 5), dtype=np.uint8))
    ip.write_bytes(full[:-10])
    with pytest.raises(TruncatedFile):
        load_idx(ip)
    ip.write_bytes(full[:8])
    with pytest.raises(TruncatedFile):
        load_idx(ip)


# ---------------------------------------------------------------------------
# CSV loader
# ---------------------------------------------------------------------------

def test_csv_loader_labeled(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.5,-1.25,0.3,2\n1.0,0.0,-0.125,0\n", encoding="utf-8")
    ds = load_csv_vectors(p, 3)
    assert len(ds) == 2
    assert ds.labels.tolist() == [2, 0]
    assert ds.samples[0].tolist() == [fxp.from_real(v) for v in (0.5, -1.25, 0.3)]


def test_csv_loader_unlabeled(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.5,-1.25,0.3\n1.0,0.0,-0.125\n\n", encoding="utf-8")
    ds = load_csv_vectors(p, 3)
    assert len(ds) == 2 and ds.labels is None


def test_csv_feature_vector_scale(tmp_path):
    # 2,947 rows of 561 features each, labeled
    rng = np.random.default_rng(9)
    rows = rng.normal(0, 1, size=(2947, 561)).round(3)
    labels = rng.integers(0, 6, size=2947)
    p = tmp_path / "features.csv"
    with p.open("w", encoding="utf-8") as fh:
        for r, lab in zip(rows, labels):
            fh.write(",".join(repr(v) for v in r.tolist()) + f",{lab}\n")
    ds = load_csv_vectors(p, 561)
    assert len(ds) == 2947
    assert ds.width == 561
    assert ds.labels.tolist() == labels.tolist()


def test_csv_width_mismatch(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(",".join(["0.1"] * 560) + "\n", encoding="utf-8")
    with pytest.raises(WidthMismatch):
        load_csv_vectors(p, 561)


def test_csv_inconsistent_labeling(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1.0,2.0,5\n1.0,2.0\n", encoding="utf-8")
    with pytest.raises(WidthMismatch):
        load_csv_vectors(p, 2)


def test_csv_parse_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1.0,abc,3.0\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_csv_vectors(p, 3)
    p.write_text("1.0,2.0,3.0,notalabel\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_csv_vectors(p, 3)
