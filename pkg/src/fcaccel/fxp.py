"""Bit-exact Q7.8 / Q15.16 fixed-point arithmetic.

Weights and activations are Q7.8: 16-bit two's complement, 8 fractional
bits, value = raw / 256, range [-128.0, +127.99609375]. Accumulators are
Q15.16: 32-bit two's complement, value = raw / 65536. Raw values are plain
Python ints (numpy integer arrays in the vectorized helpers); every
operation clamps and truncates explicitly so results are reproducible bit
for bit on any platform.

Policy choices, fixed here and relied on by every caller:

  * ``from_real`` rounds half away from zero and saturates at the Q7.8
    bounds.
  * Accumulation saturates at the Q15.16 bounds. Saturation events are
    counted in a module-level diagnostics counter; results themselves stay
    deterministic and do not depend on the counter.
  * Narrowing Q15.16 -> Q7.8 truncates toward negative infinity
    (arithmetic right shift by 8), then saturates.

The product of any two Q7.8 raws fits a 32-bit accumulator exactly
(|raw| <= 2^15, so |product| <= 2^30), hence ``mul_q78`` never rounds.
"""

from __future__ import annotations

import math

import numpy as np

Q78_FRAC = 8
Q78_ONE = 1 << Q78_FRAC          # 256
Q78_MIN = -(1 << 15)
Q78_MAX = (1 << 15) - 1

ACC_FRAC = 16
ACC_ONE = 1 << ACC_FRAC          # 65536
ACC_MIN = -(1 << 31)
ACC_MAX = (1 << 31) - 1


class _SaturationCounter:
    """Counts accumulator saturation events. Diagnostics only: no result
    ever depends on it, so concurrent increments are harmless."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0


_overflow = _SaturationCounter()


def overflow_count() -> int:
    """Accumulator saturation events since the last reset."""
    return _overflow.count


def reset_overflow_count() -> None:
    _overflow.count = 0


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def from_real(x: float) -> int:
    """Quantize a finite real to the nearest Q7.8 raw.

    Rounds half away from zero; out-of-range values saturate at the bounds
    (saturation is defined behavior, not an error).
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    scaled = x * Q78_ONE
    raw = math.floor(abs(scaled) + 0.5)
    if scaled < 0:
        raw = -raw
    return min(max(raw, Q78_MIN), Q78_MAX)


def q78_to_real(raw: int) -> float:
    return raw / Q78_ONE


def acc_from_real(x: float) -> int:
    """Quantize to a Q15.16 raw with the same rounding rule as from_real."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    scaled = x * ACC_ONE
    raw = math.floor(abs(scaled) + 0.5)
    if scaled < 0:
        raw = -raw
    return min(max(raw, ACC_MIN), ACC_MAX)


def acc_to_real(raw: int) -> float:
    return raw / ACC_ONE


def mul_q78(a: int, w: int) -> int:
    """Exact product of two Q7.8 raws as a Q15.16 raw (never overflows)."""
    return a * w


def saturate_acc(v: int) -> int:
    """Clamp to the Q15.16 raw range, counting clamp events."""
    if v > ACC_MAX:
        _overflow.count += 1
        return ACC_MAX
    if v < ACC_MIN:
        _overflow.count += 1
        return ACC_MIN
    return v


def mac(acc: int, a: int, w: int) -> int:
    """acc + a*w with Q15.16 saturation."""
    return saturate_acc(acc + a * w)


def to_q78_saturating(acc: int) -> int:
    """Narrow a Q15.16 raw to Q7.8: arithmetic shift right by 8 (truncation
    toward negative infinity), then saturate."""
    raw = acc >> 8
    if raw > Q78_MAX:
        return Q78_MAX
    if raw < Q78_MIN:
        return Q78_MIN
    return raw


# ---------------------------------------------------------------------------
# Vectorized helpers (bit-identical to the scalar operations)
# ---------------------------------------------------------------------------

def quantize_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized ``from_real`` for float arrays; returns int16 raws."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("cannot quantize non-finite values")
    scaled = x * Q78_ONE
    mag = np.floor(np.abs(scaled) + 0.5)
    raw = np.where(scaled >= 0, mag, -mag)
    return np.clip(raw, Q78_MIN, Q78_MAX).astype(np.int16)


def to_q78_vec(acc: np.ndarray) -> np.ndarray:
    """Vectorized ``to_q78_saturating`` for int64 accumulators."""
    raw = np.asarray(acc, dtype=np.int64) >> 8
    return np.clip(raw, Q78_MIN, Q78_MAX).astype(np.int16)


def mac_fold(w_raws: np.ndarray, a_raws: np.ndarray, acc_init: int = 0) -> int:
    """Left fold of ``mac`` over paired weight/activation raws.

    Fast path: when no running prefix leaves the Q15.16 range, the
    saturating fold equals the plain integer sum. Rows where a prefix
    escapes the range are recomputed with the scalar ``mac`` so saturation
    order is honored exactly.
    """
    w = np.asarray(w_raws, dtype=np.int64)
    a = np.asarray(a_raws, dtype=np.int64)
    if w.size == 0:
        return acc_init
    run = np.cumsum(w * a) + acc_init
    if run.max() <= ACC_MAX and run.min() >= ACC_MIN:
        return int(run[-1])
    acc = acc_init
    for wi, ai in zip(w.tolist(), a.tolist()):
        acc = mac(acc, ai, wi)
    return acc


def fold_rows(w_rows: np.ndarray, a_raws: np.ndarray, acc_init: int = 0) -> np.ndarray:
    """Saturating MAC fold of every row of ``w_rows`` against one activation
    vector. Returns int64 accumulators, one per row, bit-identical to
    folding ``mac`` left to right along each row."""
    w = np.asarray(w_rows, dtype=np.int64)
    a = np.asarray(a_raws, dtype=np.int64)
    if w.shape[1] == 0:
        return np.full(w.shape[0], acc_init, dtype=np.int64)
    run = np.cumsum(w * a, axis=1) + acc_init
    accs = run[:, -1].copy()
    bad = (run.max(axis=1) > ACC_MAX) | (run.min(axis=1) < ACC_MIN)
    if bad.any():
        a_list = a.tolist()
        for i in np.flatnonzero(bad):
            acc = acc_init
            for wi, ai in zip(w[i].tolist(), a_list):
                acc = mac(acc, ai, wi)
            accs[i] = acc
    return accs
