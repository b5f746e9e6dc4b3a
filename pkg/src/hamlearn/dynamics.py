"""Ground-truth Hamiltonians, exact evolution and trajectory datasets."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ._io import SchemaError, check_schema, dump_json, load_json, require, SCHEMA_VERSION
from .pauli import (
    MAX_QUBITS,
    DimensionError,
    MeasurementVector,
    PauliError,
    PauliString,
    SizeLimitError,
    as_pauli,
    as_paulis,
    expectations,
    n_qubits_of,
)


@dataclass(frozen=True)
class Hamiltonian:
    """Real-weighted sum of Pauli strings; duplicate generators are merged."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise SizeLimitError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        merged: dict[PauliString, float] = {}
        for coeff, gen in self.terms:
            gen = as_pauli(gen)
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError(f"coefficient of {gen} is not finite")
            if gen.n_qubits != self.n_qubits:
                raise DimensionError(f"term {gen} does not act on {self.n_qubits} qubits")
            merged[gen] = merged.get(gen, 0.0) + coeff
        object.__setattr__(self, "terms", tuple((c, g) for g, c in merged.items()))

    @classmethod
    def from_terms(cls, terms: dict[str, float] | Iterable[tuple[str, float]]) -> "Hamiltonian":
        """Build from ``{"XXI": 1.5, ...}`` or ``[("XXI", 1.5), ...]``."""
        items = list(terms.items()) if isinstance(terms, dict) else list(terms)
        if not items:
            raise ValueError("cannot infer n_qubits from an empty term list")
        n = len(items[0][0])
        return cls(n, tuple((c, as_pauli(lbl)) for lbl, c in items))

    @property
    def generators(self) -> tuple[PauliString, ...]:
        return tuple(g for _, g in self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {g.label: c for c, g in self.terms}

    def is_commuting(self) -> bool:
        gens = self.generators
        return all(a.commutes_with(b) for i, a in enumerate(gens) for b in gens[i + 1:])

    def matrix(self) -> np.ndarray:
        return hamiltonian_matrix(self)

    @cached_property
    def _eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix())

    def energy(self, state: np.ndarray) -> float | np.ndarray:
        """<H> as the weighted sum of per-term expectations."""
        if not self.terms:
            return 0.0 if state.ndim == 1 else np.zeros(state.shape[1])
        return expectations(self.generators, state) @ self.coefficients


def hamiltonian_matrix(h: Hamiltonian) -> np.ndarray:
    dim = 1 << h.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, gen in h.terms:
        out += coeff * gen.matrix()
    return out


def exact_evolve(h: Hamiltonian, state: np.ndarray, t: float) -> np.ndarray:
    """exp(-iHt) applied to ``state`` through the cached eigendecomposition of H."""
    if not math.isfinite(t):
        raise ValueError(f"evolution time must be finite, got {t}")
    if n_qubits_of(state) != h.n_qubits:
        raise DimensionError(
            f"Hamiltonian acts on {h.n_qubits} qubits, state has {n_qubits_of(state)}"
        )
    if t == 0:
        return np.array(state, dtype=complex, copy=True)
    evals, vecs = h._eigh
    phases = np.exp(-1j * evals * t)
    coords = vecs.conj().T @ state
    if state.ndim == 1:
        return vecs @ (phases * coords)
    return vecs @ (phases[:, None] * coords)


def random_pure_state(n_qubits: int, seed: int) -> np.ndarray:
    """Haar-random pure state: i.i.d. complex Gaussian amplitudes, normalized."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise SizeLimitError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    rng = np.random.default_rng(seed)
    dim = 1 << n_qubits
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return amps / np.linalg.norm(amps)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent integer seed for a sub-stream, e.g. trajectory ``i`` of a run."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Expectation values at steps ``k = 0..n_steps`` for a fixed observable list.

    ``values`` has shape ``(n_steps + 1, n_observables)``.  When noise was added,
    ``truth`` holds the noiseless values on the same grid.
    """

    dt: float
    observables: tuple[PauliString, ...]
    values: np.ndarray
    sigma: float = 0.0
    seed: int = 0
    initial_state: np.ndarray | None = None
    truth: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "observables", as_paulis(self.observables))
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.observables):
            raise SchemaError(
                f"values array shape {values.shape} does not match "
                f"{len(self.observables)} observables"
            )
        if values.shape[0] < 1:
            raise SchemaError("trajectory has no records")
        object.__setattr__(self, "values", values)
        if self.truth is not None:
            truth = np.array(self.truth, dtype=float)
            if truth.shape != values.shape:
                raise SchemaError(f"truth shape {truth.shape} != values shape {values.shape}")
            object.__setattr__(self, "truth", truth)
        if self.initial_state is not None:
            psi = np.array(self.initial_state, dtype=complex)
            n = n_qubits_of(psi)
            if self.observables and self.observables[0].n_qubits != n:
                raise DimensionError("initial_state and observables disagree on qubit count")
            object.__setattr__(self, "initial_state", psi)
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise SchemaError(f"sigma must be finite and >= 0, got {self.sigma}")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_qubits(self) -> int:
        return self.observables[0].n_qubits

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def records(self) -> list[tuple[int, np.ndarray]]:
        return list(enumerate(self.values))

    @property
    def clean(self) -> np.ndarray:
        """Noiseless values (``values`` itself when no noise was added)."""
        return self.values if self.truth is None else self.truth

    def measurement(self, k: int) -> MeasurementVector:
        return MeasurementVector(self.observables, self.values[k])

    def column(self, label: str | PauliString, noiseless: bool = False) -> np.ndarray:
        idx = self.observables.index(as_pauli(label))
        return (self.clean if noiseless else self.values)[:, idx]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.dt == other.dt
            and self.sigma == other.sigma
            and self.seed == other.seed
            and self.observables == other.observables
            and same(self.values, other.values)
            and same(self.truth, other.truth)
            and same(self.initial_state, other.initial_state)
        )


def step_noise(seed: int, k: int, n_observables: int, sigma: float) -> np.ndarray:
    """Gaussian noise for step ``k``; entry ``j`` depends only on (seed, k, j)."""
    return np.random.default_rng([seed, k]).normal(0.0, sigma, n_observables)


def generate_trajectory(
    h: Hamiltonian,
    initial: np.ndarray,
    dt: float,
    steps: int,
    observables: Sequence[PauliString | str],
    sigma: float = 0.0,
    seed: int = 0,
) -> Trajectory:
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps}")
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    observables = as_paulis(observables)
    initial = np.asarray(initial, dtype=complex)
    if n_qubits_of(initial) != h.n_qubits:
        raise DimensionError("initial state and Hamiltonian disagree on qubit count")

    # Each column is the exact state at k*dt, so no error accumulates over steps.
    evals, vecs = h._eigh
    coords = vecs.conj().T @ initial
    ks = np.arange(steps + 1)
    phases = np.exp(-1j * np.outer(evals, ks * dt))
    states = vecs @ (phases * coords[:, None])
    clean = expectations(observables, states)

    if sigma > 0:
        noise = np.stack([step_noise(seed, k, len(observables), sigma) for k in ks])
        return Trajectory(dt, observables, clean + noise, sigma, seed, initial, truth=clean)
    return Trajectory(dt, observables, clean, 0.0, seed, initial)


# -- persistence ---------------------------------------------------------------


def trajectory_to_dict(t: Trajectory) -> dict:
    records = []
    for k, vals in enumerate(t.values):
        rec = {"k": k, "values": [float(v) for v in vals]}
        if t.truth is not None:
            rec["truth"] = [float(v) for v in t.truth[k]]
        records.append(rec)
    init = None
    if t.initial_state is not None:
        init = {
            "re": [float(v) for v in t.initial_state.real],
            "im": [float(v) for v in t.initial_state.imag],
        }
    return {
        "schema": SCHEMA_VERSION,
        "dt": float(t.dt),
        "sigma": float(t.sigma),
        "seed": int(t.seed),
        "observables": [p.label for p in t.observables],
        "initial_state": init,
        "records": records,
    }


def _float_list(value, where: str) -> list[float]:
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise SchemaError(f"{where} must be a list of numbers")
    return [float(v) for v in value]


def trajectory_from_dict(doc: dict) -> Trajectory:
    check_schema(doc)
    dt = float(require(doc, "dt", (int, float)))
    sigma = float(require(doc, "sigma", (int, float)))
    seed = require(doc, "seed", int)
    labels = require(doc, "observables", list)
    try:
        observables = as_paulis(labels)
    except PauliError as exc:
        raise SchemaError(f"field 'observables': {exc}") from exc
    init_doc = require(doc, "initial_state")
    initial = None
    if init_doc is not None:
        if not isinstance(init_doc, dict):
            raise SchemaError("field 'initial_state' must be an object or null")
        re = _float_list(require(init_doc, "re", where="initial_state: "), "initial_state.re")
        im = _float_list(require(init_doc, "im", where="initial_state: "), "initial_state.im")
        if len(re) != len(im):
            raise SchemaError("initial_state.re and initial_state.im differ in length")
        initial = np.array(re) + 1j * np.array(im)
    records = require(doc, "records", list)
    values, truth = [], []
    for i, rec in enumerate(records):
        where = f"records[{i}]: "
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}must be an object")
        k = require(rec, "k", int, where)
        if k != i:
            raise SchemaError(f"{where}field 'k' is {k}, expected {i} (steps must be 0..m without gaps)")
        vals = _float_list(require(rec, "values", list, where), f"records[{i}].values")
        if len(vals) != len(observables):
            raise SchemaError(
                f"{where}field 'values' has length {len(vals)}, expected {len(observables)}"
            )
        values.append(vals)
        if "truth" in rec:
            tv = _float_list(rec["truth"], f"records[{i}].truth")
            if len(tv) != len(observables):
                raise SchemaError(f"{where}field 'truth' has wrong length")
            truth.append(tv)
    if truth and len(truth) != len(values):
        raise SchemaError("field 'truth' present on some records only")
    return Trajectory(
        dt,
        observables,
        np.array(values, dtype=float).reshape(len(values), len(observables)),
        sigma,
        seed,
        initial,
        np.array(truth) if truth else None,
    )


def save_dataset(t: Trajectory, path: str | os.PathLike) -> None:
    dump_json(path, trajectory_to_dict(t))


def load_dataset(path: str | os.PathLike) -> Trajectory:
    doc = load_json(path)
    try:
        return trajectory_from_dict(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def hamiltonian_to_dict(h: Hamiltonian) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "n_qubits": h.n_qubits,
        "terms": [{"pauli": g.label, "coeff": c} for c, g in h.terms],
    }


def hamiltonian_from_dict(doc: dict) -> Hamiltonian:
    check_schema(doc)
    n = require(doc, "n_qubits", int)
    terms = []
    for i, term in enumerate(require(doc, "terms", list)):
        where = f"terms[{i}]: "
        if not isinstance(term, dict):
            raise SchemaError(f"{where}must be an object")
        label = require(term, "pauli", str, where)
        coeff = require(term, "coeff", (int, float), where)
        try:
            gen = PauliString.parse(label)
        except PauliError as exc:
            raise SchemaError(f"{where}field 'pauli': {exc}") from exc
        if gen.n_qubits != n:
            raise SchemaError(f"{where}field 'pauli' {label!r} does not have {n} qubits")
        terms.append((float(coeff), gen))
    return Hamiltonian(n, tuple(terms))


def save_hamiltonian(h: Hamiltonian, path: str | os.PathLike) -> None:
    dump_json(path, hamiltonian_to_dict(h))


def load_hamiltonian(path: str | os.PathLike) -> Hamiltonian:
    doc = load_json(path)
    try:
        return hamiltonian_from_dict(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
