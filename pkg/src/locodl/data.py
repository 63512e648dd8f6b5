"""LibSVM ingestion, client partitioning, and Dirichlet synthetic data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError
from .objectives import Shard


@dataclass
class Dataset:
    """Rows of (sparse features, label); features stored as index->value dicts (0-based)."""

    rows: list   # list of (dict[int, float], float)
    d: int

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.d == other.d and self.rows == other.rows

    def dense(self):
        a = np.zeros((len(self.rows), self.d))
        b = np.zeros(len(self.rows))
        for i, (feats, label) in enumerate(self.rows):
            for j, v in feats.items():
                a[i, j] = v
            b[i] = label
        return a, b

    def union_shard(self):
        a, b = self.dense()
        return Shard(a, b)


def _normalize_labels(raw):
    alphabet = set(raw)
    if alphabet <= {-1.0, 1.0}:
        return raw
    if alphabet <= {0.0, 1.0}:
        return [1.0 if v == 1.0 else -1.0 for v in raw]
    raise InputError(f"unsupported label alphabet {sorted(alphabet)}; need binary labels")


def parse_libsvm(stream):
    """Parse LibSVM text: one 'label idx:val idx:val ...' sample per line.

    Indices are 1-based and strictly increasing in the source; '#' starts a
    comment; blank lines are skipped.  Labels in {0,1} are mapped to {-1,+1}.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [line.rstrip("\n") for line in stream]
    raw_rows = []
    d = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ParseError(lineno, f"non-numeric label {parts[0]!r}") from None
        feats = {}
        prev = 0
        for pair in parts[1:]:
            if ":" not in pair:
                raise ParseError(lineno, f"malformed feature pair {pair!r}")
            idx_s, val_s = pair.split(":", 1)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(lineno, f"malformed feature pair {pair!r}") from None
            if idx <= prev:
                raise ParseError(lineno, f"feature indices must be strictly increasing (saw {idx} after {prev})")
            prev = idx
            feats[idx - 1] = val
            d = max(d, idx)
        raw_rows.append((feats, label))
    labels = _normalize_labels([label for _, label in raw_rows])
    rows = [(feats, lab) for (feats, _), lab in zip(raw_rows, labels)]
    return Dataset(rows, d)


def serialize_libsvm(dataset):
    """Inverse of parse_libsvm (labels already normalized to -1/+1)."""
    lines = []
    for feats, label in dataset.rows:
        pairs = " ".join(f"{j + 1}:{v!r}" for j, v in sorted(feats.items()))
        head = "+1" if label > 0 else "-1"
        lines.append(f"{head} {pairs}".rstrip())
    return "\n".join(lines) + "\n"


def load_libsvm(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh)


def partition(dataset, n, seed):
    """Shuffle and split into n equal shards of m = rows // n; the rest is discarded."""
    rows = len(dataset.rows)
    if n < 1 or n > rows:
        raise InputError(f"cannot split {rows} rows across {n} clients")
    rng = np.random.default_rng(seed)
    order = rng.permutation(rows)
    m = rows // n
    a, b = dataset.dense()
    shards = []
    for i in range(n):
        idx = order[i * m:(i + 1) * m]
        shards.append(Shard(a[idx], b[idx]))
    return shards


def dirichlet_synthetic(n, d, alpha, seed):
    """One Dirichlet(alpha * 1_d) feature vector per client with a fair-coin label."""
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if n < 1 or d < 2:
        raise InputError("need n >= 1 and d >= 2")
    rng = np.random.default_rng(seed)
    # normalized Gamma draws: standard Dirichlet construction
    gammas = rng.gamma(alpha, 1.0, size=(n, d))
    feats = gammas / gammas.sum(axis=1, keepdims=True)
    labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    rows = [({j: float(feats[i, j]) for j in range(d) if feats[i, j] != 0.0}, float(labels[i]))
            for i in range(n)]
    return Dataset(rows, d)
