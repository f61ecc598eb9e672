"""Helpers for operators on C^N (x) C^N.

An operator is a plain ``(N^2, N^2)`` ndarray in the ``np.kron`` layout:
``E_ij (x) E_kl`` sits at row ``i*N + k`` and column ``j*N + l``.
"""

from __future__ import annotations

import numpy as np


def unit(i: int, j: int, n: int) -> np.ndarray:
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def one(a) -> np.ndarray:
    """``A_1 = A (x) 1``."""
    a = np.asarray(a, dtype=complex)
    return np.kron(a, np.eye(a.shape[0]))


def two(a) -> np.ndarray:
    """``A_2 = 1 (x) A``."""
    a = np.asarray(a, dtype=complex)
    return np.kron(np.eye(a.shape[0]), a)


def permutation(n: int) -> np.ndarray:
    """``P_12 = sum E_ij (x) E_ji``."""
    p = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            p[i * n + j, j * n + i] = 1.0
    return p


def from_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Operator with ``E_ij (x) E_kl`` coefficient ``coeffs[i, j, k, l]``."""
    n = coeffs.shape[0]
    return np.ascontiguousarray(coeffs.transpose(0, 2, 1, 3)).reshape(n * n, n * n)


def to_coeffs(op: np.ndarray) -> np.ndarray:
    n = int(round(np.sqrt(op.shape[0])))
    return op.reshape(n, n, n, n).transpose(0, 2, 1, 3)


def swap(op: np.ndarray) -> np.ndarray:
    """Exchange the two tensor factors: ``P op P``."""
    n = int(round(np.sqrt(op.shape[0])))
    p = permutation(n)
    return p @ op @ p


def norm(op) -> float:
    """Max-abs entry norm used for all residuals."""
    arr = np.asarray(op)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def to_json(op: np.ndarray) -> dict:
    """Serializable form with ``E_ij (x) E_kl`` labelled entries."""
    c = to_coeffs(op)
    n = c.shape[0]
    entries = []
    for i, j, k, l in np.ndindex(c.shape):
        v = complex(c[i, j, k, l])
        if v != 0:
            entries.append({"label": f"E{i}{j}(x)E{k}{l}", "re": v.real, "im": v.imag})
    return {"N": n, "entries": entries}


def from_json(data: dict) -> np.ndarray:
    n = int(data["N"])
    c = np.zeros((n, n, n, n), dtype=complex)
    for e in data["entries"]:
        lab = e["label"]
        i, j, k, l = int(lab[1]), int(lab[2]), int(lab[7]), int(lab[8])
        c[i, j, k, l] = complex(e["re"], e["im"])
    return from_coeffs(c)
