"""
Candidate rotation-gate libraries and the parameterized product circuit.

A library is an ordered list of Pauli generators.  The circuit for angles
``phi`` is the product of ``exp(-i phi_i / 2 P_i)``; the first generator acts on
the state first.  A stored angle is the full gate argument, so the implied
Hamiltonian coefficient is ``phi_i / (2 dt)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import Hamiltonian, exact_evolve, random_pure_state
from .pauli import (
    DimensionError,
    MeasurementVector,
    PauliError,
    PauliString,
    as_paulis,
    expectations,
    n_qubits_of,
)


@dataclass(frozen=True)
class GateLibrary:
    n_qubits: int
    generators: tuple[PauliString, ...]

    def __post_init__(self) -> None:
        gens = as_paulis(self.generators)
        object.__setattr__(self, "generators", gens)
        seen = set()
        for g in gens:
            if g.n_qubits != self.n_qubits:
                raise DimensionError(f"generator {g} does not act on {self.n_qubits} qubits")
            if g.is_identity:
                raise PauliError("the all-identity generator cannot appear in a library")
            if g in seen:
                raise PauliError(f"duplicate generator {g}")
            seen.add(g)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "GateLibrary":
        gens = as_paulis(labels)
        if not gens:
            raise PauliError("a library needs at least one generator")
        return cls(gens[0].n_qubits, gens)

    def __len__(self) -> int:
        return len(self.generators)

    @property
    def labels(self) -> list[str]:
        return [g.label for g in self.generators]

    def index(self, generator: PauliString | str) -> int:
        return self.labels.index(str(generator))


def _single(n: int, pos: int, axis: str) -> str:
    return "".join(axis if q == pos else "I" for q in range(n))


def _pair(n: int, i: int, j: int, a: str, b: str) -> str:
    chars = ["I"] * n
    chars[i], chars[j] = a, b
    return "".join(chars)


def default_library(n_qubits: int) -> GateLibrary:
    """All weight-1 strings, then all weight-2 strings (3N + 9 C(N,2) gates)."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    gens = [_single(n_qubits, q, a) for q in range(n_qubits) for a in "XYZ"]
    gens += [
        _pair(n_qubits, i, j, a, b)
        for i, j in itertools.combinations(range(n_qubits), 2)
        for a in "XYZ"
        for b in "XYZ"
    ]
    return GateLibrary(n_qubits, as_paulis(gens))


def xx_network_library(n_qubits: int) -> GateLibrary:
    if n_qubits < 2:
        raise ValueError("an XX network needs at least two qubits")
    gens = [_pair(n_qubits, i, j, "X", "X") for i, j in itertools.combinations(range(n_qubits), 2)]
    return GateLibrary(n_qubits, as_paulis(gens))


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Rotation angles aligned with a library; frozen entries are pinned at zero."""

    angles: np.ndarray
    frozen: np.ndarray | None = None

    def __post_init__(self) -> None:
        angles = np.array(self.angles, dtype=float).reshape(-1)
        frozen = (
            np.zeros(angles.shape, dtype=bool)
            if self.frozen is None
            else np.array(self.frozen, dtype=bool).reshape(-1)
        )
        if frozen.shape != angles.shape:
            raise ValueError("frozen mask and angles differ in length")
        if np.any(angles[frozen] != 0.0):
            raise ValueError("frozen parameters must be exactly zero")
        angles.setflags(write=False)
        frozen.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "frozen", frozen)

    @classmethod
    def zeros(cls, n: int) -> "ParameterVector":
        return cls(np.zeros(n))

    def __len__(self) -> int:
        return self.angles.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return np.array_equal(self.angles, other.angles) and np.array_equal(
            self.frozen, other.frozen
        )

    @property
    def active(self) -> np.ndarray:
        return ~self.frozen

    def with_active(self, values: np.ndarray) -> "ParameterVector":
        angles = np.zeros_like(self.angles)
        angles[self.active] = values
        return ParameterVector(angles, self.frozen)


def _angles_of(theta: ParameterVector | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(theta, ParameterVector):
        return theta.angles
    return np.asarray(theta, dtype=float).reshape(-1)


def apply_circuit(
    lib: GateLibrary, theta: ParameterVector | Sequence[float], state: np.ndarray
) -> np.ndarray:
    """Apply the library's rotations in order to a state or a column batch of states."""
    angles = _angles_of(theta)
    if angles.size != len(lib):
        raise ValueError(f"{angles.size} angles for a library of {len(lib)} generators")
    if n_qubits_of(state) != lib.n_qubits:
        raise DimensionError(
            f"library acts on {lib.n_qubits} qubits, state has {n_qubits_of(state)}"
        )
    out = np.array(state, dtype=complex, copy=True)
    for gen, phi in zip(lib.generators, angles):
        if phi == 0.0:
            continue
        src, phase = gen._action
        flipped = out[src] * (phase if out.ndim == 1 else phase[:, None])
        out = np.cos(0.5 * phi) * out - 1j * np.sin(0.5 * phi) * flipped
    return out


def circuit_unitary(lib: GateLibrary, theta: ParameterVector | Sequence[float]) -> np.ndarray:
    return apply_circuit(lib, theta, np.eye(1 << lib.n_qubits, dtype=complex))


def forecast(
    lib: GateLibrary,
    theta: ParameterVector | Sequence[float],
    start: np.ndarray,
    n_steps: int,
    observables: Sequence[PauliString | str],
) -> list[MeasurementVector]:
    """Measurements after each of ``n_steps`` repeated circuit applications."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    observables = as_paulis(observables)
    return [MeasurementVector(observables, row) for row in forecast_table(lib, theta, start, n_steps, observables)]


def forecast_table(
    lib: GateLibrary,
    theta: ParameterVector | Sequence[float],
    start: np.ndarray,
    n_steps: int,
    observables: Sequence[PauliString],
) -> np.ndarray:
    """Array form of :func:`forecast`, shape ``(n_steps, len(observables))``."""
    observables = as_paulis(observables)
    if any(p.n_qubits != lib.n_qubits for p in observables):
        raise DimensionError("observables and library disagree on qubit count")
    u = circuit_unitary(lib, theta)
    states = np.empty((start.shape[0], n_steps), dtype=complex)
    psi = np.asarray(start, dtype=complex)
    for k in range(n_steps):
        psi = u @ psi
        states[:, k] = psi
    return expectations(observables, states)


def angles_from_hamiltonian(lib: GateLibrary, h: Hamiltonian, dt: float) -> np.ndarray:
    """Embed H as angles 2 * coeff * dt on its generators (zero elsewhere)."""
    angles = np.zeros(len(lib))
    labels = lib.labels
    for coeff, gen in h.terms:
        if gen.label not in labels:
            raise KeyError(f"Hamiltonian term {gen} is not in the library")
        angles[labels.index(gen.label)] = 2.0 * coeff * dt
    return angles


def single_step_error(
    lib: GateLibrary,
    theta: ParameterVector | Sequence[float],
    h: Hamiltonian,
    dt: float,
    trials: int = 20,
    seed: int = 0,
) -> float:
    """Worst 2-norm gap between one circuit step and exact evolution over random states."""
    if dt == 0:
        return 0.0
    worst = 0.0
    for i in range(trials):
        psi = random_pure_state(lib.n_qubits, seed + i)
        gap = np.linalg.norm(apply_circuit(lib, theta, psi) - exact_evolve(h, psi, dt))
        worst = max(worst, float(gap))
    return worst
