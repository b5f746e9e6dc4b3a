"""
Pauli-string algebra and a small dense statevector kernel.

Conventions
-----------
Qubit 1 is the leftmost character of a label and the most significant bit of
the amplitude index, so ``"XZ"`` acts as X on the high bit and Z on the low
bit of a 4-component state.

States are plain complex ``numpy`` arrays of length ``2**n``.  Every kernel
function also accepts a batch of states stacked as the columns of a
``(2**n, B)`` array; this is what the cost functions use.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 10
AXES = "IXYZ"

_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PauliError(ValueError):
    """Malformed Pauli label or an operation that the label does not support."""


class DimensionError(ValueError):
    """Qubit count of an operator does not match the state it acts on."""


class SizeLimitError(ValueError):
    """Requested qubit count is outside the supported dense range."""


class ReconstructionError(ValueError):
    """Measurement set cannot determine a state."""


def _check_size(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise SizeLimitError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, stored by its canonical label."""

    label: str

    def __post_init__(self) -> None:
        if not isinstance(self.label, str) or not self.label:
            raise PauliError(f"invalid Pauli label {self.label!r}")
        bad = set(self.label) - set(AXES)
        if bad:
            raise PauliError(
                f"invalid Pauli label {self.label!r}: characters {sorted(bad)} not in {AXES}"
            )

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        return cls(text.strip())

    @classmethod
    def from_axes(cls, axes: Iterable[str]) -> "PauliString":
        return cls("".join(axes))

    def __str__(self) -> str:
        return self.label

    def __len__(self) -> int:
        return len(self.label)

    @property
    def n_qubits(self) -> int:
        return len(self.label)

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(self.label)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.label)

    @property
    def is_identity(self) -> bool:
        return self.weight == 0

    def commutes_with(self, other: "PauliString") -> bool:
        if other.n_qubits != self.n_qubits:
            raise DimensionError(f"{self} and {other} act on different qubit counts")
        clashes = sum(
            a != "I" and b != "I" and a != b for a, b in zip(self.label, other.label)
        )
        return clashes % 2 == 0

    # Bit-level description: (P psi)[b] = phase[b] * psi[b ^ x_mask].
    @cached_property
    def _masks(self) -> tuple[int, int, int]:
        n = self.n_qubits
        x_mask = z_mask = 0
        n_y = 0
        for j, c in enumerate(self.label):
            bit = 1 << (n - 1 - j)
            if c in "XY":
                x_mask |= bit
            if c in "YZ":
                z_mask |= bit
            if c == "Y":
                n_y += 1
        return x_mask, z_mask, n_y

    @cached_property
    def _action(self) -> tuple[np.ndarray, np.ndarray]:
        x_mask, z_mask, n_y = self._masks
        idx = np.arange(1 << self.n_qubits)
        parity = np.array([bin(v).count("1") & 1 for v in (idx & z_mask)])
        phase = ((-1j) ** n_y) * (1 - 2 * parity)
        return idx ^ x_mask, phase.astype(complex)

    def matrix(self) -> np.ndarray:
        """Dense Kronecker-product matrix; used for oracles and small reconstructions."""
        out = np.ones((1, 1), dtype=complex)
        for c in self.label:
            out = np.kron(out, _MATRICES[c])
        return out


def as_pauli(p: "PauliString | str") -> PauliString:
    return p if isinstance(p, PauliString) else PauliString.parse(p)


def as_paulis(ps: Iterable["PauliString | str"]) -> tuple[PauliString, ...]:
    return tuple(as_pauli(p) for p in ps)


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[0]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise DimensionError(f"state length {dim} is not a power of two")
    return n


def _check_dims(p: PauliString, state: np.ndarray) -> None:
    n = n_qubits_of(state)
    if p.n_qubits != n:
        raise DimensionError(f"{p} acts on {p.n_qubits} qubits but the state has {n}")


def basis_state(bits: str | int, n_qubits: int | None = None) -> np.ndarray:
    """Computational basis state, e.g. ``basis_state("01")``."""
    if isinstance(bits, str):
        n_qubits, index = len(bits), int(bits, 2)
    else:
        if n_qubits is None:
            raise ValueError("n_qubits is required for an integer basis index")
        index = bits
    _check_size(n_qubits)
    out = np.zeros(1 << n_qubits, dtype=complex)
    out[index] = 1.0
    return out


def complete_basis(n_qubits: int) -> list[PauliString]:
    """All ``4**n`` Pauli strings, lexicographic with I < X < Y < Z, qubit 1 most significant."""
    _check_size(n_qubits)
    return [PauliString("".join(t)) for t in itertools.product(AXES, repeat=n_qubits)]


def apply_pauli(p: PauliString | str, state: np.ndarray) -> np.ndarray:
    p = as_pauli(p)
    _check_dims(p, state)
    if p.is_identity:
        return np.array(state, dtype=complex, copy=True)
    src, phase = p._action
    if state.ndim == 1:
        return phase * state[src]
    return phase[:, None] * state[src]


def expectation(p: PauliString | str, state: np.ndarray) -> float | np.ndarray:
    """Re <s|P|s>; for a batch, one value per column."""
    p = as_pauli(p)
    _check_dims(p, state)
    if p.is_identity:
        val = np.sum(np.abs(state) ** 2, axis=0)
    else:
        val = np.sum(state.conj() * apply_pauli(p, state), axis=0).real
    return float(val) if state.ndim == 1 else val


def pauli_rotation(p: PauliString | str, angle: float, state: np.ndarray) -> np.ndarray:
    """exp(-i angle/2 P) applied to ``state``, by the closed form valid for P**2 = I."""
    p = as_pauli(p)
    if p.is_identity:
        raise PauliError("the all-identity generator only adds a global phase")
    _check_dims(p, state)
    if angle == 0.0:
        return np.array(state, dtype=complex, copy=True)
    half = 0.5 * angle
    return np.cos(half) * state - 1j * np.sin(half) * apply_pauli(p, state)


@dataclass(frozen=True)
class MeasurementVector:
    observables: tuple[PauliString, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "observables", as_paulis(self.observables))
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.observables),):
            raise ValueError(
                f"{len(self.observables)} observables but values have shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.observables)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MeasurementVector):
            return NotImplemented
        return self.observables == other.observables and np.array_equal(
            self.values, other.values
        )

    def as_dict(self) -> dict[str, float]:
        return {p.label: float(v) for p, v in zip(self.observables, self.values)}


def expectations(observables: Sequence[PauliString], states: np.ndarray) -> np.ndarray:
    """Expectation table: ``(n_obs,)`` for one state, ``(B, n_obs)`` for a batch."""
    if states.ndim == 1:
        return np.array([expectation(p, states) for p in observables], dtype=float)
    if not observables:
        return np.zeros((states.shape[1], 0))
    return np.stack([expectation(p, states) for p in observables], axis=1)


def measure_all(state: np.ndarray, observables: Sequence[PauliString | str]) -> MeasurementVector:
    observables = as_paulis(observables)
    return MeasurementVector(observables, expectations(observables, state))


def _basis_n_qubits(observables: Sequence[PauliString]) -> int:
    count = len(observables)
    n = (count.bit_length() - 1) // 2
    if count < 4 or 4**n != count:
        raise ReconstructionError(
            f"reconstruction requires a complete Pauli basis; got {count} observables"
        )
    labels = {p.label for p in observables}
    if len(labels) != count or any(p.n_qubits != n for p in observables):
        raise ReconstructionError(
            "reconstruction requires a complete Pauli basis; observable set is incomplete"
        )
    return n


def density_from_measurements(m: MeasurementVector) -> np.ndarray:
    """Linear decoding rho = 2**-N sum_k m_k F_k over a complete basis (not projected)."""
    n = _basis_n_qubits(m.observables)
    dim = 1 << n
    rho = np.zeros((dim, dim), dtype=complex)
    rows = np.arange(dim)
    for p, v in zip(m.observables, m.values):
        if v == 0.0:
            continue
        cols, phase = p._action
        # rho[b, b ^ x] gets v * phase[b]
        rho[rows, cols] += v * phase
    return rho / dim


def fix_global_phase(state: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    nz = np.flatnonzero(np.abs(state) > atol)
    if nz.size == 0:
        return state
    lead = state[nz[0]]
    return state * (abs(lead) / lead)


def reconstruct_state(m: MeasurementVector) -> np.ndarray:
    """Pure state closest to the decoded density matrix (dominant eigenvector)."""
    rho = density_from_measurements(m)
    rho = 0.5 * (rho + rho.conj().T)
    _, vecs = np.linalg.eigh(rho)
    psi = vecs[:, -1]
    psi = psi / np.linalg.norm(psi)
    return fix_global_phase(psi)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)
