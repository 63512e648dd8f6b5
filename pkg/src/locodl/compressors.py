"""Unbiased random compressors with exact variance and bit-cost bookkeeping.

Compression is simulated at full precision: the payload is the real vector
the declared encoding could carry, and `bits` meters the wire size.  The
supported kinds are identity, rand-k sparsification, natural (power-of-two)
quantization, their composition, and l1-magnitude selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

KINDS = ("identity", "rand_k", "natural", "rand_k_natural", "l1_selection")

# natural quantization budgets one sign bit plus an 8-bit exponent
_EXP_MIN = -126
_EXP_MAX = 127


def _index_bits(d):
    return (d - 1).bit_length() if d > 1 else 0


def _omega(kind, d, k):
    if kind == "identity":
        return 0.0
    if kind == "rand_k":
        return d / k - 1.0
    if kind == "natural":
        return 1.0 / 8.0
    if kind == "rand_k_natural":
        return 9.0 * d / (8.0 * k) - 1.0
    if kind == "l1_selection":
        return float(d - 1)
    raise InputError(f"unknown compressor kind {kind!r}")


def _bits(kind, d, k):
    if kind == "identity":
        return 32 * d
    if kind == "rand_k":
        return 32 * k + k * _index_bits(d)
    if kind == "natural":
        return 9 * d
    if kind == "rand_k_natural":
        return 9 * k + k * _index_bits(d)
    if kind == "l1_selection":
        return 32 + _index_bits(d)
    raise InputError(f"unknown compressor kind {kind!r}")


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    d: int
    k: int | None
    n: int
    omega: float
    omega_av: float
    bits_per_message: int


def make_spec(kind, d, n=1, k=None):
    """Build a CompressorSpec with the closed-form omega and bit cost."""
    if kind not in KINDS:
        raise InputError(f"unknown compressor kind {kind!r}")
    if d < 1 or n < 1:
        raise InputError("d and n must be positive")
    if kind in ("rand_k", "rand_k_natural"):
        if k is None or not (1 <= k <= d):
            raise InputError("rand-k needs 1 <= k <= d")
    else:
        k = None
    w = _omega(kind, d, k)
    return CompressorSpec(kind, d, k, n, w, w / n, _bits(kind, d, k))


def omega(spec):
    return spec.omega


def omega_av(spec, n):
    if n < 1:
        raise InputError("n must be positive")
    return spec.omega / n


def bit_cost(spec):
    return spec.bits_per_message


@dataclass(frozen=True)
class CompressedMessage:
    payload: np.ndarray
    bits: int
    saturated: bool = False


def floyd_sample(rng, d, k):
    """Uniform k-subset of {0, ..., d-1} without replacement, O(k) draws."""
    chosen = set()
    for j in range(d - k, d):
        t = int(rng.integers(0, j + 1))
        chosen.add(j if t in chosen else t)
    return np.fromiter(sorted(chosen), dtype=np.intp, count=k)


def _natural_round(values, rng):
    """Unbiased rounding of each value to a signed power of two (or zero)."""
    out = np.zeros_like(values)
    saturated = False
    nonzero = values != 0.0
    if not np.any(nonzero):
        return out, saturated
    v = values[nonzero]
    mant, exp = np.frexp(np.abs(v))  # |v| = mant * 2^exp, mant in [0.5, 1)
    lo_exp = exp - 1                 # 2^lo_exp <= |v| <= 2^(lo_exp+1)
    p_up = 2.0 * mant - 1.0          # (|v| - 2^a) / 2^a
    up = rng.random(v.shape) < p_up
    result_exp = lo_exp + up
    clipped = np.clip(result_exp, _EXP_MIN, _EXP_MAX)
    saturated = bool(np.any(clipped != result_exp))
    out[nonzero] = np.sign(v) * np.ldexp(1.0, clipped)
    return out, saturated


def compress(spec, x, rng):
    """Apply the compressor once; returns the full-precision payload and metered bits."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.d,):
        raise InputError(f"x has shape {x.shape}, spec dimension is {spec.d}")
    if not np.all(np.isfinite(x)):
        raise InputError("input coordinates must be finite")

    if spec.kind == "identity":
        return CompressedMessage(x.copy(), spec.bits_per_message)

    if spec.kind == "rand_k":
        idx = floyd_sample(rng, spec.d, spec.k)
        payload = np.zeros_like(x)
        payload[idx] = x[idx] * (spec.d / spec.k)
        return CompressedMessage(payload, spec.bits_per_message)

    if spec.kind == "natural":
        payload, sat = _natural_round(x, rng)
        return CompressedMessage(payload, spec.bits_per_message, sat)

    if spec.kind == "rand_k_natural":
        idx = floyd_sample(rng, spec.d, spec.k)
        scaled = x[idx] * (spec.d / spec.k)
        rounded, sat = _natural_round(scaled, rng)
        payload = np.zeros_like(x)
        payload[idx] = rounded
        return CompressedMessage(payload, spec.bits_per_message, sat)

    if spec.kind == "l1_selection":
        norm1 = float(np.sum(np.abs(x)))
        payload = np.zeros_like(x)
        if norm1 == 0.0:
            return CompressedMessage(payload, spec.bits_per_message)
        cdf = np.cumsum(np.abs(x)) / norm1
        j = int(np.searchsorted(cdf, rng.random(), side="right"))
        j = min(j, spec.d - 1)
        payload[j] = math.copysign(norm1, x[j])
        return CompressedMessage(payload, spec.bits_per_message)

    raise InputError(f"unknown compressor kind {spec.kind!r}")


def _natural_round_matrix(values, rng):
    """Row-vectorized unbiased power-of-two rounding; returns (rounded, saturated)."""
    out = np.zeros_like(values)
    nonzero = values != 0.0
    saturated = False
    if np.any(nonzero):
        v = values[nonzero]
        mant, exp = np.frexp(np.abs(v))
        p_up = 2.0 * mant - 1.0
        result_exp = (exp - 1) + (rng.random(v.shape) < p_up)
        clipped = np.clip(result_exp, _EXP_MIN, _EXP_MAX)
        saturated = bool(np.any(clipped != result_exp))
        out[nonzero] = np.sign(v) * np.ldexp(1.0, clipped)
    return out, saturated


def _rand_subsets(rng, n, d, k):
    """n independent uniform k-subsets of {0,...,d-1}, as an (n, k) index array."""
    return np.argpartition(rng.random((n, d)), k - 1, axis=1)[:, :k]


def compress_round(spec, X, rng):
    """Compress one row per client in a single vectorized draw.

    Statistically identical to calling `compress` on each row, but consumes a
    single round-level random stream so that a whole communication round costs
    a handful of numpy operations.  Returns (payloads, saturated_count).
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if d != spec.d:
        raise InputError(f"X has dimension {d}, spec dimension is {spec.d}")
    if not np.all(np.isfinite(X)):
        raise InputError("input coordinates must be finite")

    if spec.kind == "identity":
        return X.copy(), 0

    if spec.kind == "rand_k":
        idx = _rand_subsets(rng, n, d, spec.k)
        payload = np.zeros_like(X)
        rows = np.arange(n)[:, None]
        payload[rows, idx] = X[rows, idx] * (spec.d / spec.k)
        return payload, 0

    if spec.kind == "natural":
        payload, sat = _natural_round_matrix(X, rng)
        return payload, n if sat else 0

    if spec.kind == "rand_k_natural":
        idx = _rand_subsets(rng, n, d, spec.k)
        rows = np.arange(n)[:, None]
        scaled = X[rows, idx] * (spec.d / spec.k)
        rounded, sat = _natural_round_matrix(scaled, rng)
        payload = np.zeros_like(X)
        payload[rows, idx] = rounded
        return payload, int(sat)

    if spec.kind == "l1_selection":
        absx = np.abs(X)
        cum = np.cumsum(absx, axis=1)
        norms = cum[:, -1]
        payload = np.zeros_like(X)
        alive = norms > 0.0
        if np.any(alive):
            u = rng.random(n) * norms
            j = np.minimum((cum < u[:, None]).sum(axis=1), d - 1)
            rows = np.flatnonzero(alive)
            payload[rows, j[rows]] = np.copysign(norms[rows], X[rows, j[rows]])
        return payload, 0

    raise InputError(f"unknown compressor kind {spec.kind!r}")


def empirical_variance_ratio(spec, x, trials, rng):
    """Mean of ||C(x) - x||^2 / ||x||^2 over independent compressions."""
    x = np.asarray(x, dtype=np.float64)
    if trials < 1:
        raise InputError("trials must be positive")
    sq = float(x @ x)
    if sq == 0.0:
        raise InputError("variance ratio is undefined at x = 0")
    total = 0.0
    for _ in range(trials):
        err = compress(spec, x, rng).payload - x
        total += float(err @ err)
    return total / (trials * sq)
