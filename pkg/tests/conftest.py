"""Shared fixtures: small reference problems and an a5a-scale dataset file.

The large-dataset fixture prefers a real LibSVM file pointed to by the
LOCODL_A5A environment variable and otherwise generates a synthetic
binary-sparse stand-in with the same shape (6414 rows, 122 features,
~14 active features per row).
"""

import os

import numpy as np
import pytest

from locodl import objectives as obj

A5A_ENV_VAR = "LOCODL_A5A"
A5A_ROWS = 6414
A5A_DIM = 122


def synthesize_binary_dataset(path, rows=A5A_ROWS, d=A5A_DIM, seed=20240501):
    """Write a LibSVM file of sparse binary rows with popularity-skewed features."""
    rng = np.random.default_rng(seed)
    popularity = rng.dirichlet(np.full(d, 0.3))
    w = rng.standard_normal(d) / np.sqrt(14)
    lines = []
    for _ in range(rows):
        idx = rng.choice(d, size=14, replace=False, p=popularity)
        idx.sort()
        score = w[idx].sum() + 0.5 * rng.standard_normal()
        label = 1 if score > 0 else -1
        lines.append(f"{label} " + " ".join(f"{j + 1}:1" for j in idx))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def a5a_path(tmp_path_factory):
    real = os.environ.get(A5A_ENV_VAR)
    if real and os.path.exists(real):
        return real
    path = tmp_path_factory.mktemp("data") / "a5a_like.libsvm"
    return str(synthesize_binary_dataset(str(path)))


@pytest.fixture(scope="session")
def quad_problem():
    """Fixed random quadratic problem: d = 10, n = 5, kappa = 100."""
    rng = np.random.default_rng(42)
    return obj.random_quadratic_problem(10, 5, 100.0, rng)
