import numpy as np
import pytest

from hamlearn.dynamics import Hamiltonian, generate_trajectory
from hamlearn.experiments import (
    ExperimentSpec,
    GridMismatchError,
    builtin_experiments,
    compare_trajectories,
    generate_data,
    get_experiment,
    reproduce,
    run_experiment,
    write_report,
)
from hamlearn.pauli import basis_state, complete_basis

NAMES = [
    "single-spin",
    "three-spin",
    "five-spin-tfim",
    "three-spin-noise",
    "two-spin-limited",
    "five-spin-network",
]


class TestBuiltins:
    def test_names(self):
        assert [s.name for s in builtin_experiments()] == NAMES

    def test_single_spin_lambda(self):
        assert get_experiment("single-spin").threshold == pytest.approx(0.001, abs=1e-15)

    def test_network_observed(self):
        obs = get_experiment("five-spin-network").observed
        assert set(obs) == {"IXIII", "IYIII", "IZIII", "IIIXI", "IIIYI", "IIIZI"}

    def test_noise_sigma(self):
        assert get_experiment("three-spin-noise").sigma == 0.05

    def test_library_sizes(self):
        sizes = {s.name: len(s.gate_library()) for s in builtin_experiments()}
        assert sizes == {
            "single-spin": 3,
            "three-spin": 36,
            "five-spin-tfim": 105,
            "three-spin-noise": 36,
            "two-spin-limited": 15,
            "five-spin-network": 10,
        }

    @pytest.mark.parametrize(
        "name,commuting",
        [
            ("single-spin", True),
            ("three-spin", False),
            ("five-spin-tfim", False),
            ("three-spin-noise", False),
            ("two-spin-limited", True),
            ("five-spin-network", True),
        ],
    )
    def test_term_wise_commutation(self, name, commuting):
        assert get_experiment(name).truth.is_commuting() is commuting

    def test_unknown_name_lists_valid(self):
        with pytest.raises(KeyError) as info:
            get_experiment("nope")
        for name in NAMES:
            assert name in str(info.value)

    def test_spec_validation(self):
        h = Hamiltonian.from_terms({"XX": 1.0})
        with pytest.raises(ValueError):
            ExperimentSpec("x", h, mode="limited")
        with pytest.raises(ValueError):
            ExperimentSpec("x", h, observed=("XI",))
        with pytest.raises(ValueError):
            ExperimentSpec("x", h, mode="sideways")
        with pytest.raises(ValueError):
            ExperimentSpec("x", h, train_steps=2000)

    def test_generate_data_is_deterministic(self):
        spec = get_experiment("two-spin-limited")
        a, b = generate_data(spec, 5), generate_data(spec, 5)
        assert len(a) == 3
        assert all(x == y for x, y in zip(a, b))
        assert not np.array_equal(a[0].initial_state, a[1].initial_state)


class TestCompare:
    def test_perfect_prediction(self):
        t = generate_trajectory(Hamiltonian.from_terms({"Y": 1.5}), basis_state("0"), 0.01, 50, complete_basis(1))
        cmp = compare_trajectories(t, t.values[1:], predicted_observables=t.observables)
        assert all(v["max_dev"] == 0.0 and v["rms_dev"] == 0.0 for v in cmp.summary().values())

    def test_measurement_vector_input(self):
        t = generate_trajectory(Hamiltonian.from_terms({"Y": 1.5}), basis_state("0"), 0.01, 5, ["X", "Z"])
        preds = [t.measurement(k) for k in range(1, 6)]
        cmp = compare_trajectories(t, preds, ["Z"])
        assert cmp.observables == ("Z",)
        assert cmp.max_deviation("Z") == 0.0

    def test_grid_mismatch(self):
        t = generate_trajectory(Hamiltonian.from_terms({"Y": 1.5}), basis_state("0"), 0.01, 5, ["Z"])
        with pytest.raises(GridMismatchError):
            compare_trajectories(t, np.zeros((9, 1)), predicted_observables=["Z"])
        with pytest.raises(GridMismatchError):
            compare_trajectories(t, np.zeros((2, 1)), steps=[1, 2, 3], predicted_observables=["Z"])
        with pytest.raises(GridMismatchError):
            compare_trajectories(t, np.zeros((5, 1)), ["X"], predicted_observables=["Z"])

    def test_validation_window(self):
        t = generate_trajectory(Hamiltonian.from_terms({"Y": 1.5}), basis_state("0"), 0.01, 10, ["Z"])
        pred = t.values[1:].copy()
        pred[2] += 1.0  # step 3, inside the excluded window
        cmp = compare_trajectories(t, pred, predicted_observables=["Z"], validation_from=5)
        assert cmp.max_deviation("Z") == 0.0

    def test_csv_layout(self):
        t = generate_trajectory(Hamiltonian.from_terms({"Y": 1.5}), basis_state("0"), 0.01, 3, ["Z"])
        text = compare_trajectories(t, t.values[1:], predicted_observables=["Z"]).csv("Z")
        lines = text.splitlines()
        assert lines[0] == "time,truth,noisy,predicted"
        assert len(lines) == 4
        assert float(lines[1].split(",")[3]) == t.values[1, 0]


class TestRuns:
    def test_single_spin(self):
        rep = run_experiment(get_experiment("single-spin"), 0)
        assert rep.passed
        assert rep.result.support == ["Y"]
        assert rep.result.coefficients()["Y"] == pytest.approx(1.5, abs=0.02)
        assert rep.result.final_cost < 1e-8
        # Recovered model against truth over k = 100..1000.
        assert rep.comparison.max_deviation("Z") < 5e-3

    def test_two_spin_limited(self):
        rep = run_experiment(get_experiment("two-spin-limited"), 0)
        assert sorted(rep.result.support) == ["XX", "ZZ"]
        for c in rep.result.coefficients().values():
            assert c == pytest.approx(1.0, abs=0.01)
        assert rep.result.final_cost < 1e-8

    def test_five_spin_network(self):
        rep = run_experiment(get_experiment("five-spin-network"), 0)
        coeffs = rep.result.coefficients()
        assert coeffs.keys() == {"XXIII", "IXXII", "IIXXI", "IIIXX"}
        for lbl, want in zip(("XXIII", "IXXII", "IIXXI", "IIIXX"), (1.5, 1.0, 1.5, 1.0)):
            assert coeffs[lbl] == pytest.approx(want, abs=0.02)
        assert rep.result.final_cost < 1e-8

    def test_failing_target_is_a_report_not_an_error(self):
        spec = ExperimentSpec(
            "strict",
            Hamiltonian.from_terms({"Y": 1.5}),
            lambda_units=0.05,
            total_steps=200,
            cost_target=-1.0,
        )
        rep = run_experiment(spec, 0)
        assert not rep.passed
        assert [t.name for t in rep.targets if not t.passed] == ["final_cost"]

    @pytest.mark.slow
    def test_noise_sparse_beats_dense(self):
        # Realization dependent: the recursive forecast starts from a noisy record,
        # so both models inherit its reconstruction error.  Seed 0 reaches a
        # ratio of about 2.7; the other two exceed 8.  Same 2-of-3 rule as the
        # noise experiment's own pass criterion.
        spec = get_experiment("three-spin-noise")
        hits = 0
        for seed in spec.seeds:
            rep = run_experiment(spec, seed)
            assert rep.e_param < rep.dense_e_param
            ratios = [
                rep.dense_comparison.max_deviation(lbl) / rep.comparison.max_deviation(lbl)
                for lbl in ("IXY", "XYI", "YXZ", "ZIZ")
            ]
            hits += max(ratios) >= 5
        assert hits >= spec.min_passing


class TestReports:
    def test_write_report_files(self, tmp_path):
        rep = reproduce(get_experiment("single-spin"), 0)
        paths = write_report(rep, tmp_path)
        assert sorted(p.name for p in paths) == [
            "single-spin.json",
            "single-spin_X.csv",
            "single-spin_Y.csv",
            "single-spin_Z.csv",
        ]
        assert rep.passed

    def test_reports_are_byte_identical(self, tmp_path):
        spec = get_experiment("two-spin-limited")
        a = write_report(reproduce(spec, 3), tmp_path / "a")
        b = write_report(reproduce(spec, 3), tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_min_passing(self):
        rep = reproduce(get_experiment("single-spin"), 0)
        assert rep.n_passed == 1 and rep.passed
