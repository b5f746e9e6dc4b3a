"""
Command-line interface.

Exit codes: 0 success (for ``reproduce``: every target passed), 1 runtime
failure or failed targets, 2 usage error.
"""
from __future__ import annotations

import argparse
import re
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import SchemaError, check_schema, dump_json, load_json, require, write_text_atomic
from .circuits import GateLibrary, default_library, forecast_table, xx_network_library
from .dynamics import (
    derive_seed,
    generate_trajectory,
    load_dataset,
    load_hamiltonian,
    random_pure_state,
    save_dataset,
)
from .experiments import builtin_experiments, get_experiment, reproduce, write_report
from .identify import (
    FullAccessProblem,
    LimitedAccessProblem,
    SparseOptConfig,
    load_result,
    sparse_identify,
)
from .pauli import DimensionError, PauliError, as_paulis, basis_state, complete_basis, reconstruct_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_LAMBDA_UNITS = re.compile(r"^\s*([0-9.eE+-]+)\s*(?:x|\*|·)\s*2\s*dt\s*$")


class UsageError(Exception):
    pass


def parse_lambda(text: str, dt: float) -> float:
    """Threshold in radians from ``"0.01"`` or the ``"0.25x2dt"`` shorthand."""
    m = _LAMBDA_UNITS.match(text)
    try:
        value = float(m.group(1)) * 2 * dt if m else float(text)
    except ValueError:
        raise UsageError(f"--lambda: cannot parse {text!r} (use radians or '<x>x2dt')") from None
    if not np.isfinite(value) or value < 0:
        raise UsageError(f"--lambda must be finite and >= 0, got {text!r}")
    return value


def _labels(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def load_library(spec: str, n_qubits: int) -> GateLibrary:
    if spec == "default":
        return default_library(n_qubits)
    if spec in ("xx-network", "xx_network"):
        return xx_network_library(n_qubits)
    doc = load_json(spec)
    check_schema(doc, f"{spec}: ")
    labels = require(doc, "generators", list, f"{spec}: ")
    for lbl in labels:
        if not isinstance(lbl, str):
            raise SchemaError(f"{spec}: field 'generators' holds a non-string entry {lbl!r}")
    try:
        lib = GateLibrary.from_labels(labels)
    except PauliError as exc:
        raise SchemaError(f"{spec}: field 'generators': {exc}") from exc
    if lib.n_qubits != n_qubits:
        raise SchemaError(f"{spec}: library acts on {lib.n_qubits} qubits, data on {n_qubits}")
    return lib


def _data_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("*.json"))
            if not found:
                raise FileNotFoundError(f"{p}: directory holds no .json datasets")
            files += found
        else:
            files.append(p)
    return files


def _fmt(x: float) -> str:
    return repr(float(x))


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    h = load_hamiltonian(args.hamiltonian)
    if args.observables == "complete":
        observables = complete_basis(h.n_qubits)
    else:
        observables = as_paulis(_labels(args.observables))
        for p in observables:
            if p.n_qubits != h.n_qubits:
                raise UsageError(f"observable {p} does not act on {h.n_qubits} qubits")
    if args.trajectories < 1:
        raise UsageError("--trajectories must be >= 1")
    trajs = []
    for i in range(args.trajectories):
        psi0 = random_pure_state(h.n_qubits, derive_seed(args.seed, i, 0))
        trajs.append(
            generate_trajectory(
                h, psi0, args.dt, args.steps, observables, args.sigma, derive_seed(args.seed, i, 1)
            )
        )
    out = Path(args.out)
    if len(trajs) == 1:
        save_dataset(trajs[0], out)
    else:
        for i, t in enumerate(trajs):
            save_dataset(t, out / f"traj_{i:03d}.json")
    print(
        f"generated N={h.n_qubits} steps={args.steps} sigma={args.sigma} seed={args.seed} "
        f"trajectories={len(trajs)} observables={len(observables)} -> {out}"
    )
    return EXIT_OK


def cmd_identify(args: argparse.Namespace) -> int:
    trajs = [load_dataset(f) for f in _data_files(args.data)]
    dt = trajs[0].dt
    lam = parse_lambda(args.lam, dt)
    lib = load_library(args.library, trajs[0].n_qubits)
    if args.mode == "full":
        steps = 100 if args.train_steps is None else args.train_steps
        problem = FullAccessProblem.from_trajectories(lib, trajs, steps)
    else:
        steps = 10 if args.train_steps is None else args.train_steps
        problem = LimitedAccessProblem.from_trajectories(lib, trajs, steps)
    result = sparse_identify(problem, SparseOptConfig(threshold_lambda=lam, seed=args.seed))
    doc = result.to_dict()
    doc["lambda_input"] = args.lam
    doc["mode"] = args.mode
    doc["train_steps"] = steps
    dump_json(args.out, doc)
    print(f"support ({len(result.support)}): {' '.join(result.support) or '(empty)'}")
    for lbl, c in result.coefficients().items():
        print(f"  {lbl}: {c:.6f}  (angle {2 * c * dt:.6e} rad)")
    print(f"final cost: {result.final_cost:.6e}")
    print(f"rounds: {result.rounds} (converged: {result.converged})")
    return EXIT_OK


def _start_state(args: argparse.Namespace, n_qubits: int) -> tuple[np.ndarray, float]:
    spec = " ".join(args.start).strip()
    if spec.startswith("basis:"):
        return basis_state(spec.split(":", 1)[1].strip(), n_qubits), 0.0
    if args.data is None:
        raise UsageError(f"--start {spec} needs --data")
    traj = load_dataset(args.data)
    if traj.n_qubits != n_qubits:
        raise UsageError(f"dataset has {traj.n_qubits} qubits, result has {n_qubits}")
    if spec == "initial-state":
        if traj.initial_state is None:
            raise UsageError("dataset has no initial_state")
        return traj.initial_state, 0.0
    m = re.fullmatch(r"dataset-step[: ]\s*(\d+)", spec)
    if not m:
        raise UsageError(f"--start: expected 'dataset-step:<k>', 'initial-state' or 'basis:<bits>', got {spec!r}")
    k = int(m.group(1))
    if k > traj.n_steps:
        raise UsageError(f"--start dataset-step {k} is past the dataset end ({traj.n_steps})")
    return reconstruct_state(traj.measurement(k)), k * traj.dt


def cmd_forecast(args: argparse.Namespace) -> int:
    result = load_result(args.result)
    n = result.library.n_qubits
    observables = as_paulis(_labels(args.observables))
    bad = [p.label for p in observables if p.n_qubits != n]
    if bad:
        raise DimensionError(f"observables {bad} do not match the result's {n} qubits")
    if args.horizon < 0:
        raise UsageError("--horizon must be >= 0")
    start, t0 = _start_state(args, n)
    table = forecast_table(result.library, result.angles, start, args.horizon, observables)
    lines = [",".join(["time"] + [p.label for p in observables])]
    for j, row in enumerate(table, start=1):
        lines.append(",".join([_fmt(t0 + j * result.dt)] + [_fmt(v) for v in row]))
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    print(f"forecast {args.horizon} steps of {len(observables)} observables -> {args.out}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    names = [s.name for s in builtin_experiments()]
    if args.experiment == "all":
        specs = builtin_experiments()
    else:
        try:
            specs = [get_experiment(args.experiment)]
        except KeyError:
            raise UsageError(
                f"unknown experiment {args.experiment!r}; valid names: {', '.join(names)}"
            ) from None
    ok = True
    for spec in specs:
        t0 = time.perf_counter()
        rep = reproduce(spec, args.seed)
        write_report(rep, args.out_dir)
        elapsed = time.perf_counter() - t0
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {spec.name} ({rep.n_passed}/{len(rep.runs)} runs, {elapsed:.1f}s)")
        for run in rep.runs:
            for target in run.targets:
                mark = "ok  " if target.passed else "FAIL"
                print(f"    seed {run.seed} {mark} {target.name}: {target.detail}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_list(args: argparse.Namespace) -> int:
    for spec in builtin_experiments():
        terms = " + ".join(f"{c:g}*{g}" for c, g in spec.truth.terms)
        print(f"{spec.name:18s} N={spec.n_qubits} mode={spec.mode:7s} H = {terms}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamlearn", description="Sparse Hamiltonian identification from measurement time series."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a measurement dataset")
    g.add_argument("--hamiltonian", required=True, help="Hamiltonian JSON file")
    g.add_argument("--dt", type=float, required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--observables", default="complete", help="'complete' or comma-separated labels")
    g.add_argument("--trajectories", type=int, default=1, help="when > 1, --out is a directory")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("identify", help="run sparse identification on datasets")
    i.add_argument("--data", nargs="+", required=True, help="dataset files or directories")
    i.add_argument("--mode", choices=("full", "limited"), required=True)
    i.add_argument("--lambda", dest="lam", required=True, help="radians, or '<x>x2dt'")
    i.add_argument("--library", default="default", help="default, xx-network or a JSON file")
    i.add_argument("--train-steps", type=int, default=None)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_identify)

    f = sub.add_parser("forecast", help="recursive predictions from an identification result")
    f.add_argument("--result", required=True)
    f.add_argument("--data", default=None, help="dataset supplying the start state")
    f.add_argument(
        "--start",
        nargs="+",
        required=True,
        help="'dataset-step:<k>', 'initial-state' or 'basis:<bits>'",
    )
    f.add_argument("--horizon", type=int, required=True)
    f.add_argument("--observables", required=True, help="comma-separated labels")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forecast)

    r = sub.add_parser("reproduce", help="run built-in experiments and write reports")
    r.add_argument("--experiment", required=True, help="experiment name or 'all'")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", default="reports")
    r.set_defaults(func=cmd_reproduce)

    ls = sub.add_parser("list-experiments", help="show the built-in experiments")
    ls.set_defaults(func=cmd_list)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hamlearn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hamlearn {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
