"""Shared test utilities: random admissible operators and spectrum matching."""

from __future__ import annotations

import numpy as np

from cfslab import operators as op


def random_point(rng: np.random.Generator, dim: int, n: int,
                 scale: float = 1.0) -> op.CfsPoint:
    """Random Hermitian matrix with signature at most (n, n).

    Built as W S W* with S = diag(+1 .. -1 ..), which bounds the inertia by
    construction (rank at most 2n, at most n eigenvalues of each sign).
    """
    w = rng.standard_normal((dim, 2 * n)) + 1j * rng.standard_normal((dim, 2 * n))
    s = np.diag([1.0] * n + [-1.0] * n)
    return op.make_point(scale * (w @ s @ w.conj().T), n)


def match_spectra(a: np.ndarray, b: np.ndarray) -> float:
    """Greedy one-to-one matching distance between two complex spectra."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    assert len(a) == len(b)
    worst = 0.0
    for va in a:
        j = int(np.argmin([abs(va - vb) for vb in b]))
        worst = max(worst, abs(va - b.pop(j)))
    return worst
