"""
Seeded end-to-end reproductions of the built-in identification experiments.

Each experiment generates data from a known Hamiltonian, runs sparse
identification, forecasts with the learned circuit and checks the result
against fixed targets.  Prediction protocol:

* full access: single-step predictions from each measured record inside the
  training range, then recursive application starting from the (possibly
  noisy) record at the end of training;
* limited access: recursive application from the known initial state of the
  first trajectory.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import dump_json, write_text_atomic
from .circuits import (
    GateLibrary,
    apply_circuit,
    default_library,
    forecast_table,
    xx_network_library,
)
from .dynamics import Hamiltonian, Trajectory, derive_seed, generate_trajectory, random_pure_state
from .identify import (
    FullAccessProblem,
    IdentificationResult,
    LimitedAccessProblem,
    SparseOptConfig,
    parameter_error,
    sparse_identify,
)
from .pauli import MeasurementVector, PauliString, as_paulis, complete_basis, expectations, reconstruct_state

DT = 0.01


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    truth: Hamiltonian
    library: str | tuple[str, ...] = "default"  # "default", "xx_network" or explicit labels
    mode: str = "full"
    dt: float = DT
    train_steps: int = 100
    total_steps: int = 1000
    sigma: float = 0.0
    lambda_units: float = 0.25  # threshold in units of 2*dt
    n_trajectories: int = 1
    observed: tuple[str, ...] = ()  # empty in full mode means the complete basis
    plot_observables: tuple[str, ...] = ()
    seeds: tuple[int, ...] = (0,)
    min_passing: int = 1
    coeff_tolerance: float | None = 0.02  # None: no per-coefficient target
    cost_target: float | None = None
    eparam_target_units: float | None = None  # E_param bound in units of 2*dt
    dense_ratio_target: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("full", "limited"):
            raise ValueError(f"mode must be 'full' or 'limited', got {self.mode!r}")
        n = self.truth.n_qubits
        if self.mode == "limited":
            if not self.observed or self.n_trajectories < 1:
                raise ValueError("limited mode needs observed labels and at least one trajectory")
        else:
            basis = [p.label for p in complete_basis(n)]
            if self.observed and sorted(self.observed) != sorted(basis):
                raise ValueError("full mode observes the complete basis")
        if self.train_steps > self.total_steps:
            raise ValueError("train_steps exceeds total_steps")

    @property
    def n_qubits(self) -> int:
        return self.truth.n_qubits

    @property
    def threshold(self) -> float:
        return self.lambda_units * 2 * self.dt

    @property
    def observables(self) -> tuple[PauliString, ...]:
        if self.mode == "full":
            return tuple(complete_basis(self.n_qubits))
        return as_paulis(self.observed)

    def gate_library(self) -> GateLibrary:
        if self.library == "default":
            return default_library(self.n_qubits)
        if self.library == "xx_network":
            return xx_network_library(self.n_qubits)
        return GateLibrary.from_labels(self.library)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "truth": self.truth.as_dict(),
            "library": self.library if isinstance(self.library, str) else list(self.library),
            "mode": self.mode,
            "dt": self.dt,
            "train_steps": self.train_steps,
            "total_steps": self.total_steps,
            "sigma": self.sigma,
            "lambda": self.threshold,
            "lambda_units_2dt": self.lambda_units,
            "n_trajectories": self.n_trajectories,
            "observed": [p.label for p in self.observables] if self.mode == "limited" else "complete",
            "seeds": list(self.seeds),
            "min_passing": self.min_passing,
        }


def _chain(n: int, axis: str, couplings: Sequence[float]) -> dict[str, float]:
    out = {}
    for i, c in enumerate(couplings):
        chars = ["I"] * n
        chars[i] = chars[i + 1] = axis
        out["".join(chars)] = c
    return out


def builtin_experiments() -> list[ExperimentSpec]:
    three = Hamiltonian.from_terms({"XXI": 1.5, "ZZI": 1.5, "IXX": 1.0, "IZZ": 1.0})
    tfim_terms = {"".join("X" if j == i else "I" for j in range(5)): 1.0 for i in range(5)}
    tfim_terms.update(_chain(5, "Z", [2.5, 2.0, 1.5, 1.0]))
    three_plot = ("IXY", "XYI", "YXZ", "ZIZ")
    return [
        ExperimentSpec(
            "single-spin",
            Hamiltonian.from_terms({"Y": 1.5}),
            lambda_units=0.05,
            plot_observables=("X", "Y", "Z"),
            cost_target=1e-5,
        ),
        ExperimentSpec(
            "three-spin", three, lambda_units=0.25, plot_observables=three_plot, cost_target=1e-5
        ),
        ExperimentSpec(
            "five-spin-tfim",
            Hamiltonian.from_terms(tfim_terms),
            lambda_units=0.25,
            plot_observables=("IXXYZ", "XYIZX", "YXZXY", "ZIZXY"),
            cost_target=1e-5,
        ),
        ExperimentSpec(
            "three-spin-noise",
            three,
            sigma=0.05,
            lambda_units=0.3,
            plot_observables=three_plot,
            seeds=(0, 1, 2),
            min_passing=2,
            coeff_tolerance=None,
            eparam_target_units=0.1,
            dense_ratio_target=5.0,
        ),
        ExperimentSpec(
            "two-spin-limited",
            Hamiltonian.from_terms({"XX": 1.0, "ZZ": 1.0}),
            mode="limited",
            train_steps=10,
            total_steps=100,
            lambda_units=0.25,
            n_trajectories=3,
            observed=("XI", "YI", "ZI"),
            plot_observables=("XI", "YI", "ZI"),
            coeff_tolerance=0.01,
            cost_target=1e-8,
        ),
        ExperimentSpec(
            "five-spin-network",
            Hamiltonian.from_terms(_chain(5, "X", [1.5, 1.0, 1.5, 1.0])),
            library="xx_network",
            mode="limited",
            train_steps=10,
            total_steps=100,
            lambda_units=0.35,
            n_trajectories=10,
            observed=("IXIII", "IYIII", "IZIII", "IIIXI", "IIIYI", "IIIZI"),
            plot_observables=("IXIII", "IYIII", "IZIII", "IIIXI", "IIIYI", "IIIZI"),
            cost_target=1e-8,
        ),
    ]


def get_experiment(name: str) -> ExperimentSpec:
    specs = {s.name: s for s in builtin_experiments()}
    if name not in specs:
        raise KeyError(f"unknown experiment {name!r}; valid names: {', '.join(specs)}")
    return specs[name]


# -- trajectory comparison -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Comparison:
    observables: tuple[str, ...]
    steps: np.ndarray
    times: np.ndarray
    truth: np.ndarray  # (rows, n_obs), noiseless
    noisy: np.ndarray | None
    predicted: np.ndarray
    validation_from: int

    @property
    def validation_mask(self) -> np.ndarray:
        return self.steps >= self.validation_from

    def deviations(self) -> np.ndarray:
        return self.predicted - self.truth

    def summary(self) -> dict[str, dict[str, float]]:
        dev = self.deviations()[self.validation_mask]
        out = {}
        for j, lbl in enumerate(self.observables):
            col = np.abs(dev[:, j])
            out[lbl] = {
                "max_dev": float(col.max()) if col.size else 0.0,
                "rms_dev": float(np.sqrt(np.mean(col**2))) if col.size else 0.0,
            }
        return out

    def max_deviation(self, label: str) -> float:
        return self.summary()[label]["max_dev"]

    def csv(self, label: str, extra: dict[str, np.ndarray] | None = None) -> str:
        j = self.observables.index(label)
        header = ["time", "truth", "noisy", "predicted"] + list(extra or {})
        lines = [",".join(header)]
        for r in range(self.steps.size):
            row = [
                repr(float(self.times[r])),
                repr(float(self.truth[r, j])),
                "" if self.noisy is None else repr(float(self.noisy[r, j])),
                repr(float(self.predicted[r, j])),
            ]
            row += [repr(float(col[r, j])) for col in (extra or {}).values()]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def compare_trajectories(
    truth: Trajectory,
    predicted: Sequence[MeasurementVector] | np.ndarray,
    observables: Sequence[str | PauliString] | None = None,
    steps: Sequence[int] | None = None,
    validation_from: int = 0,
    predicted_observables: Sequence[str | PauliString] | None = None,
) -> Comparison:
    """Align predictions with a recorded trajectory and measure their deviation.

    ``steps`` gives the trajectory step of each prediction row (default
    ``1..len(predicted)``).  Deviations are taken against the noiseless values.
    """
    if isinstance(predicted, np.ndarray):
        table = np.atleast_2d(predicted)
        pred_obs = as_paulis(predicted_observables or truth.observables)
    else:
        if not predicted:
            raise GridMismatchError("no predictions to compare")
        pred_obs = predicted[0].observables
        table = np.stack([m.values for m in predicted])
    steps = np.arange(1, table.shape[0] + 1) if steps is None else np.asarray(steps, dtype=int)
    if steps.size != table.shape[0]:
        raise GridMismatchError(f"{table.shape[0]} prediction rows but {steps.size} steps")
    if steps.size and (steps.min() < 0 or steps.max() > truth.n_steps):
        raise GridMismatchError(
            f"prediction steps {steps.min()}..{steps.max()} fall outside 0..{truth.n_steps}"
        )
    labels = as_paulis(observables) if observables is not None else pred_obs
    try:
        tcols = [truth.observables.index(p) for p in labels]
        pcols = [pred_obs.index(p) for p in labels]
    except ValueError as exc:
        raise GridMismatchError(f"observable missing from truth or prediction: {exc}") from exc
    return Comparison(
        observables=tuple(p.label for p in labels),
        steps=steps,
        times=steps * truth.dt,
        truth=truth.clean[steps][:, tcols],
        noisy=None if truth.truth is None else truth.values[steps][:, tcols],
        predicted=table[:, pcols],
        validation_from=validation_from,
    )


def full_access_predictions(
    lib: GateLibrary, angles: np.ndarray, traj: Trajectory, train_steps: int, observables
) -> np.ndarray:
    """Rows for steps 1..n_steps: single-step inside training, recursive after."""
    observables = as_paulis(observables)
    inputs = np.stack([reconstruct_state(traj.measurement(k)) for k in range(train_steps)], axis=1)
    single = expectations(observables, apply_circuit(lib, angles, inputs))
    start = reconstruct_state(traj.measurement(train_steps))
    recursive = forecast_table(lib, angles, start, traj.n_steps - train_steps, observables)
    return np.vstack([single, recursive])


# -- running -------------------------------------------------------------------


@dataclass(frozen=True)
class Target:
    name: str
    passed: bool
    detail: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", bool(self.passed))


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    spec: ExperimentSpec
    seed: int
    result: IdentificationResult
    e_param: float | None
    comparison: Comparison
    targets: tuple[Target, ...]
    dense_result: IdentificationResult | None = None
    dense_e_param: float | None = None
    dense_comparison: Comparison | None = None
    data: tuple[Trajectory, ...] = field(default=(), repr=False)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.targets)

    def to_dict(self) -> dict:
        doc = {
            "experiment": self.spec.name,
            "seed": self.seed,
            "passed": self.passed,
            "targets": [{"name": t.name, "passed": t.passed, "detail": t.detail} for t in self.targets],
            "result": self.result.to_dict(),
            "coefficients": self.result.coefficients(),
            "e_param": self.e_param,
            "e_param_units_2dt": None if self.e_param is None else self.e_param / (2 * self.spec.dt),
            "comparison": self.comparison.summary(),
        }
        if self.dense_result is not None:
            doc["dense"] = {
                "result": self.dense_result.to_dict(),
                "e_param": self.dense_e_param,
                "above_threshold": {
                    lbl: c
                    for lbl, c in self.dense_result.coefficients().items()
                    if abs(c) * 2 * self.spec.dt >= self.spec.threshold
                },
                "comparison": self.dense_comparison.summary() if self.dense_comparison else None,
            }
        return doc


def generate_data(spec: ExperimentSpec, seed: int) -> tuple[Trajectory, ...]:
    trajs = []
    for i in range(spec.n_trajectories):
        psi0 = random_pure_state(spec.n_qubits, derive_seed(seed, i, 0))
        trajs.append(
            generate_trajectory(
                spec.truth,
                psi0,
                spec.dt,
                spec.total_steps,
                spec.observables,
                spec.sigma,
                derive_seed(seed, i, 1),
            )
        )
    return tuple(trajs)


def _identify(spec: ExperimentSpec, data, lam: float, seed: int) -> IdentificationResult:
    lib = spec.gate_library()
    if spec.mode == "full":
        problem = FullAccessProblem.from_trajectories(lib, data, spec.train_steps)
    else:
        problem = LimitedAccessProblem.from_trajectories(lib, data, spec.train_steps)
    return sparse_identify(problem, SparseOptConfig(threshold_lambda=lam, seed=seed))


def _predict(spec: ExperimentSpec, result: IdentificationResult, traj: Trajectory) -> Comparison:
    obs = spec.plot_observables
    if spec.mode == "full":
        table = full_access_predictions(result.library, result.angles, traj, spec.train_steps, obs)
    else:
        table = forecast_table(result.library, result.angles, traj.initial_state, traj.n_steps, as_paulis(obs))
    return compare_trajectories(
        traj, table, obs, validation_from=spec.train_steps + 1, predicted_observables=obs
    )


def evaluate_targets(spec: ExperimentSpec, report_parts: dict) -> tuple[Target, ...]:
    result: IdentificationResult = report_parts["result"]
    truth = spec.truth.as_dict()
    targets = []
    support = set(result.support)
    targets.append(
        Target(
            "support",
            support == set(truth),
            f"recovered {sorted(support)} vs true {sorted(truth)}",
        )
    )
    if spec.coeff_tolerance is not None:
        est = dict(zip(result.library.labels, result.coeff_estimates))
        worst = max(abs(est.get(lbl, 0.0) - c) for lbl, c in truth.items())
        targets.append(
            Target(
                "coefficients",
                worst <= spec.coeff_tolerance,
                f"max |estimate - truth| = {worst:.3e} (tolerance {spec.coeff_tolerance})",
            )
        )
    if spec.cost_target is not None:
        targets.append(
            Target(
                "final_cost",
                result.final_cost <= spec.cost_target,
                f"final cost {result.final_cost:.3e} (target <= {spec.cost_target:.0e})",
            )
        )
    e_param = report_parts.get("e_param")
    if spec.eparam_target_units is not None:
        bound = spec.eparam_target_units * 2 * spec.dt
        targets.append(
            Target(
                "e_param",
                e_param <= bound,
                f"E_param {e_param / (2 * spec.dt):.3e} x 2dt (target <= {spec.eparam_target_units})",
            )
        )
    if spec.dense_ratio_target is not None:
        dense = report_parts["dense_e_param"]
        ratio = dense / e_param if e_param > 0 else math.inf
        targets.append(
            Target(
                "dense_ratio",
                ratio >= spec.dense_ratio_target,
                f"E_param dense / sparse = {ratio:.2f} (target >= {spec.dense_ratio_target})",
            )
        )
    return tuple(targets)


def run_experiment(spec: ExperimentSpec, seed: int = 0) -> ExperimentReport:
    data = generate_data(spec, seed)
    result = _identify(spec, data, spec.threshold, seed)
    e_param = parameter_error(result, spec.truth)
    comparison = _predict(spec, result, data[0])
    parts = {"result": result, "e_param": e_param}
    dense = dense_e = dense_cmp = None
    if spec.dense_ratio_target is not None:
        dense = _identify(spec, data, 0.0, seed)
        dense_e = parameter_error(dense, spec.truth)
        dense_cmp = _predict(spec, dense, data[0])
        parts["dense_e_param"] = dense_e
    return ExperimentReport(
        spec=spec,
        seed=seed,
        result=result,
        e_param=e_param,
        comparison=comparison,
        targets=evaluate_targets(spec, parts),
        dense_result=dense,
        dense_e_param=dense_e,
        dense_comparison=dense_cmp,
        data=data,
    )


@dataclass(frozen=True, eq=False)
class Reproduction:
    spec: ExperimentSpec
    base_seed: int
    runs: tuple[ExperimentReport, ...]

    @property
    def n_passed(self) -> int:
        return sum(r.passed for r in self.runs)

    @property
    def passed(self) -> bool:
        return self.n_passed >= self.spec.min_passing

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "experiment": self.spec.name,
            "spec": self.spec.describe(),
            "base_seed": self.base_seed,
            "passed": self.passed,
            "runs_passed": self.n_passed,
            "runs": [r.to_dict() for r in self.runs],
        }


def reproduce(spec: ExperimentSpec, base_seed: int = 0) -> Reproduction:
    runs = tuple(run_experiment(spec, base_seed + s) for s in spec.seeds)
    return Reproduction(spec, base_seed, runs)


def write_report(rep: Reproduction, out_dir: str | os.PathLike) -> list[Path]:
    """Write ``<name>.json`` plus one CSV per plot observable (first run)."""
    out_dir = Path(out_dir)
    paths = [out_dir / f"{rep.spec.name}.json"]
    dump_json(paths[0], rep.to_dict())
    first = rep.runs[0]
    extra = None
    for lbl in first.comparison.observables:
        if first.dense_comparison is not None:
            extra = {"predicted_dense": first.dense_comparison.predicted}
        path = out_dir / f"{rep.spec.name}_{lbl}.csv"
        write_text_atomic(path, first.comparison.csv(lbl, extra))
        paths.append(path)
    return paths
