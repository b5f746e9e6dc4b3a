"""Shared dense-matrix oracles.  Everything here is deliberately naive."""
from __future__ import annotations

import functools

import numpy as np
import pytest
import scipy.linalg

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_pauli(label: str) -> np.ndarray:
    """Kronecker product with the leftmost label character as the first factor."""
    return functools.reduce(np.kron, [_SINGLE[c] for c in label])


def dense_hamiltonian(terms: dict[str, float]) -> np.ndarray:
    labels = list(terms)
    dim = 2 ** len(labels[0])
    out = np.zeros((dim, dim), dtype=complex)
    for lbl, c in terms.items():
        out += c * dense_pauli(lbl)
    return out


def dense_evolve(terms: dict[str, float], state: np.ndarray, t: float) -> np.ndarray:
    return scipy.linalg.expm(-1j * t * dense_hamiltonian(terms)) @ state


def dense_rotation(label: str, angle: float) -> np.ndarray:
    return scipy.linalg.expm(-0.5j * angle * dense_pauli(label))


def haar_state(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def random_label(n: int, rng: np.random.Generator, allow_identity: bool = True) -> str:
    while True:
        lbl = "".join(rng.choice(list("IXYZ"), size=n))
        if allow_identity or set(lbl) != {"I"}:
            return lbl


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
