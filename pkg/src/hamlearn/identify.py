"""
Cost functions, the derivative-free minimizer and the sparse thresholding loop.

The thresholding loop alternates two steps starting from all-zero angles:

1. minimize the plain squared-error cost over the parameters still active,
   spending at most ``round_max_evals`` cost evaluations;
2. freeze every active parameter whose magnitude is below ``threshold_lambda``
   at exactly zero, then (with ``prune``) also freeze any remaining angle whose
   removal leaves the cost unchanged to within ``minimizer_tolerance``.

It stops when a round freezes nothing after a converged minimization, when the
whole-run evaluation budget is spent, or at ``max_rounds``.

The per-round budget makes thresholding act on partially converged fits, so a
noisy, ill-conditioned problem cannot drift far along flat directions before
small angles are removed.  The pruning pass handles generators that the data
cannot see at all (for example couplings between unobserved spins).
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from ._io import SCHEMA_VERSION, SchemaError, check_schema, dump_json, load_json, require
from .circuits import GateLibrary, ParameterVector, apply_circuit, circuit_unitary
from .dynamics import Hamiltonian, Trajectory
from .pauli import (
    MeasurementVector,
    PauliString,
    ReconstructionError,
    as_paulis,
    complete_basis,
    density_from_measurements,
    expectations,
    measure_all,
    reconstruct_state,
)


class OptimizationDiverged(RuntimeError):
    def __init__(self, angles: np.ndarray, value: float):
        super().__init__(f"cost is not finite ({value}) at angles {np.array2string(angles)}")
        self.angles = angles
        self.value = value


class MissingInitialStateError(ValueError):
    pass


class CoverageError(KeyError):
    pass


# -- problems ------------------------------------------------------------------


class Problem(Protocol):
    library: GateLibrary
    dt: float

    def cost(self, theta: ParameterVector | np.ndarray) -> float: ...


def _angles(theta) -> np.ndarray:
    return theta.angles if isinstance(theta, ParameterVector) else np.asarray(theta, dtype=float)


@dataclass(frozen=True, eq=False)
class FullAccessProblem:
    """Single-step pairs (m(t), m(t + dt)) over the complete Pauli basis."""

    library: GateLibrary
    pairs: tuple[tuple[MeasurementVector, MeasurementVector], ...]
    dt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ValueError("need at least one input/target pair")
        basis = set(complete_basis(self.library.n_qubits))
        for x, y in self.pairs:
            for m in (x, y):
                if set(m.observables) != basis or len(m.observables) != len(basis):
                    raise ReconstructionError(
                        "full-access identification requires the complete Pauli basis"
                    )

    @classmethod
    def from_trajectories(
        cls,
        library: GateLibrary,
        trajectories: Sequence[Trajectory] | Trajectory,
        train_steps: int = 100,
    ) -> "FullAccessProblem":
        if isinstance(trajectories, Trajectory):
            trajectories = [trajectories]
        dts = {t.dt for t in trajectories}
        if len(dts) != 1:
            raise ValueError(f"trajectories disagree on dt: {sorted(dts)}")
        pairs = []
        for t in trajectories:
            if train_steps > t.n_steps:
                raise ValueError(f"train_steps={train_steps} exceeds trajectory length {t.n_steps}")
            pairs += [(t.measurement(k), t.measurement(k + 1)) for k in range(train_steps)]
        return cls(library, tuple(pairs), dts.pop())

    @cached_property
    def input_states(self) -> np.ndarray:
        return np.stack([reconstruct_state(x) for x, _ in self.pairs], axis=1)

    @cached_property
    def target_densities(self) -> np.ndarray:
        return np.stack([density_from_measurements(y) for _, y in self.pairs])

    def cost(self, theta: ParameterVector | np.ndarray) -> float:
        # Pauli orthogonality: sum_P (tr P A)^2 = 2^N ||A||_F^2 for Hermitian A, so
        # the squared error over all 4^N expectations is a Frobenius distance.
        u = circuit_unitary(self.library, _angles(theta))
        out = u @ self.input_states
        rho = np.einsum("ip,jp->pij", out, out.conj())
        diff = self.target_densities - rho
        dim = out.shape[0]
        return float(dim * np.sum(diff.real**2 + diff.imag**2))

    def cost_by_measurement(self, theta: ParameterVector | np.ndarray) -> float:
        """Same cost by explicit measurement of every basis operator (slow reference)."""
        total = 0.0
        angles = _angles(theta)
        for x, y in self.pairs:
            out = apply_circuit(self.library, angles, reconstruct_state(x))
            pred = measure_all(out, y.observables)
            total += float(np.sum((y.values - pred.values) ** 2))
        return total


def cost_full(p: FullAccessProblem, theta: ParameterVector | np.ndarray) -> float:
    return p.cost(theta)


@dataclass(frozen=True, eq=False)
class LimitedTrajectory:
    initial_state: np.ndarray
    steps: tuple[int, ...]
    values: np.ndarray  # (len(steps), len(observables))

    def __post_init__(self) -> None:
        steps = tuple(int(k) for k in self.steps)
        if not steps or steps[0] < 1 or any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("target steps must be >= 1 and strictly increasing")
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(steps):
            raise ValueError("one row of target values is required per step")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_state", np.array(self.initial_state, dtype=complex))


@dataclass(frozen=True, eq=False)
class LimitedAccessProblem:
    """Known initial states and restricted measurements after k circuit applications."""

    library: GateLibrary
    observables: tuple[PauliString, ...]
    trajectories: tuple[LimitedTrajectory, ...]
    dt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "observables", as_paulis(self.observables))
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.trajectories:
            raise ValueError("need at least one trajectory")
        for tr in self.trajectories:
            if tr.initial_state is None:
                raise MissingInitialStateError("every trajectory needs a known initial state")
            if tr.values.shape[1] != len(self.observables):
                raise ValueError("target values do not match the observable list")

    @classmethod
    def from_trajectories(
        cls,
        library: GateLibrary,
        trajectories: Sequence[Trajectory] | Trajectory,
        train_steps: int = 10,
    ) -> "LimitedAccessProblem":
        if isinstance(trajectories, Trajectory):
            trajectories = [trajectories]
        observables = trajectories[0].observables
        dts = {t.dt for t in trajectories}
        if len(dts) != 1:
            raise ValueError(f"trajectories disagree on dt: {sorted(dts)}")
        parts = []
        for i, t in enumerate(trajectories):
            if t.initial_state is None:
                raise MissingInitialStateError(
                    f"trajectory {i} has no initial_state; limited mode needs a known initial state"
                )
            if t.observables != observables:
                raise ValueError("all trajectories must record the same observables")
            if train_steps > t.n_steps:
                raise ValueError(f"train_steps={train_steps} exceeds trajectory length {t.n_steps}")
            ks = tuple(range(1, train_steps + 1))
            parts.append(LimitedTrajectory(t.initial_state, ks, t.values[1 : train_steps + 1]))
        return cls(library, observables, tuple(parts), dts.pop())

    @cached_property
    def _schedule(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        by_step: dict[int, list[tuple[int, np.ndarray]]] = {}
        for i, tr in enumerate(self.trajectories):
            for k, row in zip(tr.steps, tr.values):
                by_step.setdefault(k, []).append((i, row))
        return {
            k: (np.array([i for i, _ in rows]), np.stack([r for _, r in rows]))
            for k, rows in by_step.items()
        }

    @cached_property
    def initial_states(self) -> np.ndarray:
        return np.stack([tr.initial_state for tr in self.trajectories], axis=1)

    def cost(self, theta: ParameterVector | np.ndarray) -> float:
        u = circuit_unitary(self.library, _angles(theta))
        states = self.initial_states
        schedule = self._schedule
        total = 0.0
        # Carry the states forward so u^k costs one application per step.
        for k in range(1, max(schedule) + 1):
            states = u @ states
            if k in schedule:
                idx, target = schedule[k]
                pred = expectations(self.observables, states[:, idx])
                total += float(np.sum((target - pred) ** 2))
        return total


def cost_limited(p: LimitedAccessProblem, theta: ParameterVector | np.ndarray) -> float:
    return p.cost(theta)


# -- optimization --------------------------------------------------------------


def default_max_evals(n_qubits: int) -> int:
    return 50_000 if n_qubits <= 3 else 200_000


@dataclass(frozen=True)
class SparseOptConfig:
    threshold_lambda: float
    max_rounds: int = 10
    minimizer_tolerance: float = 1e-8
    minimizer_max_evals: int | None = None  # whole-run budget; None: chosen from the qubit count
    allow_reentry: bool = False
    seed: int = 0
    initial_step: float = 0.05  # starting trust-region radius, radians
    round_max_evals: int = 3000  # S1 budget before each thresholding pass
    prune: bool = True  # also drop active angles whose removal leaves the cost unchanged

    def __post_init__(self) -> None:
        if not (math.isfinite(self.threshold_lambda) and self.threshold_lambda >= 0):
            raise ValueError("threshold_lambda must be finite and >= 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if self.round_max_evals < 1:
            raise ValueError("round_max_evals must be >= 1")

    def max_evals_for(self, n_qubits: int) -> int:
        if self.minimizer_max_evals is not None:
            return self.minimizer_max_evals
        return default_max_evals(n_qubits)


@dataclass(frozen=True)
class MinimizeResult:
    params: ParameterVector
    cost: float
    n_evals: int
    hit_max_evals: bool

    @property
    def converged(self) -> bool:
        return not self.hit_max_evals


def minimize(
    cost: Callable[[np.ndarray], float],
    initial: ParameterVector,
    config: SparseOptConfig,
    max_evals: int | None = None,
) -> MinimizeResult:
    """Derivative-free local minimization over the unfrozen angles.

    ``cost`` takes the full angle vector; frozen entries are held at zero.  The
    returned point is the best one evaluated, so accepted iterates never increase
    the cost.
    """
    active = initial.active
    if max_evals is None:
        max_evals = config.minimizer_max_evals or default_max_evals(3)
    if not active.any():
        return MinimizeResult(initial, float("nan"), 0, False)

    best = {"x": initial.angles[active].copy(), "f": math.inf}
    n_evals = 0

    def wrapped(x: np.ndarray) -> float:
        nonlocal n_evals
        full = np.zeros(initial.angles.size)
        full[active] = x
        value = float(cost(full))
        n_evals += 1
        if not math.isfinite(value):
            raise OptimizationDiverged(full, value)
        if value < best["f"]:
            best["x"], best["f"] = np.array(x, copy=True), value
        return value

    f0 = wrapped(initial.angles[active])
    if active.sum() == 0 or f0 == 0.0:
        return MinimizeResult(initial, f0, n_evals, False)
    _scipy_minimize(
        wrapped,
        initial.angles[active],
        method="COBYLA",
        tol=config.minimizer_tolerance,
        options={"rhobeg": config.initial_step, "maxiter": max(max_evals - 1, 1)},
    )
    return MinimizeResult(
        initial.with_active(best["x"]), best["f"], n_evals, n_evals >= max_evals
    )


# -- results -------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    round: int
    cost: float
    support_size: int
    n_evals: int = 0


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    library: GateLibrary
    params: ParameterVector
    dt: float
    threshold_lambda: float
    final_cost: float
    rounds: int
    history: tuple[RoundRecord, ...] = ()
    converged: bool = True
    config: dict = field(default_factory=dict)

    @property
    def angles(self) -> np.ndarray:
        return self.params.angles

    @property
    def coeff_estimates(self) -> np.ndarray:
        return self.params.angles / (2.0 * self.dt)

    @property
    def support_mask(self) -> np.ndarray:
        return self.params.active & (self.params.angles != 0.0)

    @property
    def support(self) -> list[str]:
        return [lbl for lbl, on in zip(self.library.labels, self.support_mask) if on]

    def coefficients(self) -> dict[str, float]:
        """Estimated Hamiltonian coefficients on the support."""
        return {
            lbl: float(c)
            for lbl, c, on in zip(self.library.labels, self.coeff_estimates, self.support_mask)
            if on
        }

    def hamiltonian(self) -> Hamiltonian:
        terms = tuple((c, PauliString(lbl)) for lbl, c in self.coefficients().items())
        return Hamiltonian(self.library.n_qubits, terms)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "dt": float(self.dt),
            "lambda": float(self.threshold_lambda),
            "library": self.library.labels,
            "angles": [float(a) for a in self.angles],
            "coeff_estimates": [float(c) for c in self.coeff_estimates],
            "support": self.support,
            "final_cost": float(self.final_cost),
            "rounds": int(self.rounds),
            "converged": bool(self.converged),
            "history": [asdict(r) for r in self.history],
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IdentificationResult":
        check_schema(doc)
        labels = require(doc, "library", list)
        try:
            library = GateLibrary.from_labels(labels)
        except ValueError as exc:
            raise SchemaError(f"field 'library': {exc}") from exc
        angles = np.array(require(doc, "angles", list), dtype=float)
        if angles.size != len(library):
            raise SchemaError("field 'angles' does not match the library length")
        support = set(require(doc, "support", list))
        unknown = support - set(labels)
        if unknown:
            raise SchemaError(f"field 'support' names generators outside the library: {sorted(unknown)}")
        frozen = np.array([lbl not in support for lbl in labels]) & (angles == 0.0)
        history = tuple(
            RoundRecord(**{k: h[k] for k in ("round", "cost", "support_size", "n_evals") if k in h})
            for h in require(doc, "history", list)
        )
        return cls(
            library=library,
            params=ParameterVector(angles, frozen),
            dt=float(require(doc, "dt", (int, float))),
            threshold_lambda=float(require(doc, "lambda", (int, float))),
            final_cost=float(require(doc, "final_cost", (int, float))),
            rounds=int(require(doc, "rounds", int)),
            history=history,
            converged=bool(doc.get("converged", True)),
            config=dict(doc.get("config", {})),
        )


def save_result(result: IdentificationResult, path: str | os.PathLike) -> None:
    dump_json(path, result.to_dict())


def load_result(path: str | os.PathLike) -> IdentificationResult:
    doc = load_json(path)
    try:
        return IdentificationResult.from_dict(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


# -- sparse identification -----------------------------------------------------


def _prune(problem: Problem, params: ParameterVector, tol: float) -> tuple[ParameterVector, float]:
    """Zero active angles, smallest first, while doing so raises the cost by < ``tol``."""
    angles = params.angles.copy()
    frozen = params.frozen.copy()
    cost = problem.cost(angles)
    for i in np.argsort(np.abs(angles), kind="stable"):
        if frozen[i] or angles[i] == 0.0:
            continue
        trial = angles.copy()
        trial[i] = 0.0
        trial_cost = problem.cost(trial)
        if trial_cost - cost < tol:
            angles, cost = trial, trial_cost
            frozen[i] = True
    return ParameterVector(angles, frozen), cost


def sparse_identify(
    problem: Problem,
    config: SparseOptConfig,
    minimizer: Callable[..., MinimizeResult] = minimize,
) -> IdentificationResult:
    lib = problem.library
    lam = config.threshold_lambda
    budget = config.max_evals_for(lib.n_qubits)
    params = ParameterVector.zeros(len(lib))
    history: list[RoundRecord] = []
    converged = False
    rounds = 0

    for rounds in range(1, config.max_rounds + 1):
        if config.allow_reentry:
            params = ParameterVector(params.angles)
        before = params.frozen.copy()

        # S1: fit the active angles.
        step = minimizer(problem.cost, params, config, min(config.round_max_evals, budget))
        budget -= step.n_evals
        params = step.params
        converged = step.converged

        # S2: hard-zero small active angles.
        small = params.active & (np.abs(params.angles) < lam)
        angles = np.where(small, 0.0, params.angles)
        params = ParameterVector(angles, params.frozen | small)
        if config.prune:
            params, cost = _prune(problem, params, config.minimizer_tolerance)
        else:
            cost = problem.cost(params)

        support = int(np.count_nonzero(params.active & (params.angles != 0.0)))
        history.append(RoundRecord(rounds, cost, support, step.n_evals))
        if not params.active.any():
            converged = True
            break
        if np.array_equal(params.frozen, before) and converged:
            break
        if budget <= 0:
            break

    return IdentificationResult(
        library=lib,
        params=params,
        dt=problem.dt,
        threshold_lambda=lam,
        final_cost=history[-1].cost,
        rounds=rounds,
        history=tuple(history),
        converged=converged,
        config=asdict(config),
    )


def parameter_error(
    result: IdentificationResult, truth: Hamiltonian, library: GateLibrary | None = None
) -> float:
    """2-norm between estimated and true angle vectors over the whole library."""
    library = library or result.library
    labels = library.labels
    true_angles = np.zeros(len(labels))
    for coeff, gen in truth.terms:
        if gen.label not in labels:
            raise CoverageError(f"true generator {gen} is not in the library")
        true_angles[labels.index(gen.label)] = 2.0 * coeff * result.dt
    return float(np.linalg.norm(result.angles - true_angles))
