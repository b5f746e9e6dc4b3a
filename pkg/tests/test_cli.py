import json

import numpy as np
import pytest

from hamlearn.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, UsageError, main, parse_lambda
from hamlearn.dynamics import Hamiltonian, load_dataset, save_hamiltonian
from hamlearn.identify import load_result


@pytest.fixture
def ham_files(tmp_path):
    paths = {}
    for name, terms in {
        "single": {"Y": 1.5},
        "two": {"XX": 1.0, "ZZ": 1.0},
        "three": {"XXI": 1.5, "ZZI": 1.5, "IXX": 1.0, "IZZ": 1.0},
    }.items():
        paths[name] = tmp_path / f"{name}.json"
        save_hamiltonian(Hamiltonian.from_terms(terms), paths[name])
    return paths


def run(*args):
    return main([str(a) for a in args])


class TestGenerate:
    def test_fencepost(self, ham_files, tmp_path, capsys):
        out = tmp_path / "d.json"
        assert run("generate", "--hamiltonian", ham_files["single"], "--dt", 0.01, "--steps", 1000, "--out", out) == 0
        t = load_dataset(out)
        assert t.values.shape == (1001, 4)
        assert "N=1" in capsys.readouterr().out

    def test_deterministic_noise(self, ham_files, tmp_path):
        for name in ("a.json", "b.json"):
            assert run(
                "generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 50,
                "--sigma", 0.05, "--seed", 42, "--out", tmp_path / name,
            ) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_observable_list(self, ham_files, tmp_path):
        out = tmp_path / "d.json"
        run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 5,
            "--observables", "XI,YI,ZI", "--out", out)
        assert load_dataset(out).values.shape == (6, 3)

    def test_multiple_trajectories(self, ham_files, tmp_path):
        out = tmp_path / "trajs"
        run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 5,
            "--trajectories", 3, "--observables", "XI,YI,ZI", "--out", out)
        files = sorted(out.glob("*.json"))
        assert len(files) == 3
        states = [load_dataset(f).initial_state for f in files]
        assert not np.allclose(states[0], states[1])

    def test_bad_hamiltonian_names_field(self, tmp_path, capsys):
        bad = tmp_path / "h.json"
        bad.write_text(json.dumps({"schema": 1, "n_qubits": 1, "terms": [{"pauli": "X"}]}))
        code = run("generate", "--hamiltonian", bad, "--dt", 0.01, "--steps", 5, "--out", tmp_path / "d.json")
        assert code == EXIT_FAIL
        assert "coeff" in capsys.readouterr().err
        assert not (tmp_path / "d.json").exists()

    def test_missing_required_flag(self, ham_files, tmp_path):
        assert run("generate", "--hamiltonian", ham_files["single"], "--dt", 0.01, "--out", tmp_path / "d") == EXIT_USAGE

    def test_unknown_flag(self, ham_files, tmp_path):
        code = run("generate", "--hamiltonian", ham_files["single"], "--dt", 0.01, "--steps", 3,
                   "--out", tmp_path / "d", "--colour", "red")
        assert code == EXIT_USAGE

    def test_wrong_size_observable(self, ham_files, tmp_path):
        code = run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 3,
                   "--observables", "XII", "--out", tmp_path / "d.json")
        assert code == EXIT_USAGE


class TestLambda:
    @pytest.mark.parametrize("text,want", [("0.25x2dt", 0.005), ("0.25·2dt", 0.005), ("0.003", 0.003), ("0", 0.0)])
    def test_parse(self, text, want):
        assert parse_lambda(text, 0.01) == pytest.approx(want, abs=1e-15)

    @pytest.mark.parametrize("text", ["abc", "-1", "inf", "x2dt"])
    def test_reject(self, text):
        with pytest.raises(UsageError):
            parse_lambda(text, 0.01)


@pytest.fixture
def three_data(ham_files, tmp_path):
    out = tmp_path / "three.json"
    run("generate", "--hamiltonian", ham_files["three"], "--dt", 0.01, "--steps", 200, "--out", out)
    return out


class TestIdentify:
    def test_three_spin(self, three_data, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert run("identify", "--data", three_data, "--mode", "full", "--lambda", "0.25x2dt", "--out", out) == 0
        res = load_result(out)
        assert sorted(res.support) == ["IXX", "IZZ", "XXI", "ZZI"]
        coeffs = res.coefficients()
        for lbl, want in {"XXI": 1.5, "ZZI": 1.5, "IXX": 1.0, "IZZ": 1.0}.items():
            assert coeffs[lbl] == pytest.approx(want, abs=0.02)
        text = capsys.readouterr().out
        assert "support (4)" in text and "final cost" in text and "rounds" in text
        doc = json.loads(out.read_text())
        assert doc["lambda_input"] == "0.25x2dt"
        assert doc["lambda"] == pytest.approx(0.005)

    def test_dense(self, ham_files, tmp_path):
        data = tmp_path / "d.json"
        run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 20, "--sigma", 0.05, "--out", data)
        out = tmp_path / "r.json"
        assert run("identify", "--data", data, "--mode", "full", "--lambda", "0", "--train-steps", 20, "--out", out) == 0
        assert len(load_result(out).support) > 2

    def test_bad_library_label(self, three_data, tmp_path, capsys):
        lib = tmp_path / "lib.json"
        lib.write_text(json.dumps({"schema": 1, "generators": ["XXI", "XQI"]}))
        code = run("identify", "--data", three_data, "--mode", "full", "--lambda", "0.01",
                   "--library", lib, "--out", tmp_path / "r.json")
        assert code == EXIT_FAIL
        assert "XQI" in capsys.readouterr().err
        assert not (tmp_path / "r.json").exists()

    def test_library_file(self, three_data, tmp_path):
        lib = tmp_path / "lib.json"
        lib.write_text(json.dumps({"schema": 1, "generators": ["XXI", "ZZI", "IXX", "IZZ", "XIX"]}))
        out = tmp_path / "r.json"
        assert run("identify", "--data", three_data, "--mode", "full", "--lambda", "0.25x2dt",
                   "--library", lib, "--out", out) == 0
        assert load_result(out).library.labels == ["XXI", "ZZI", "IXX", "IZZ", "XIX"]

    def test_limited_needs_initial_state(self, tmp_path, capsys):
        data = tmp_path / "d.json"
        doc = {"schema": 1, "dt": 0.01, "sigma": 0.0, "seed": 0, "observables": ["XI"],
               "initial_state": None, "records": [{"k": k, "values": [0.0]} for k in range(12)]}
        data.write_text(json.dumps(doc))
        code = run("identify", "--data", data, "--mode", "limited", "--lambda", "0.01", "--out", tmp_path / "r.json")
        assert code == EXIT_FAIL
        assert "initial_state" in capsys.readouterr().err

    def test_full_needs_complete_basis(self, ham_files, tmp_path, capsys):
        data = tmp_path / "d.json"
        run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 5,
            "--observables", "XI,YI,ZI", "--out", data)
        code = run("identify", "--data", data, "--mode", "full", "--lambda", "0.01",
                   "--train-steps", 5, "--out", tmp_path / "r.json")
        assert code == EXIT_FAIL
        assert "complete Pauli basis" in capsys.readouterr().err

    def test_limited_from_directory(self, ham_files, tmp_path):
        trajs = tmp_path / "trajs"
        run("generate", "--hamiltonian", ham_files["two"], "--dt", 0.01, "--steps", 20,
            "--trajectories", 3, "--observables", "XI,YI,ZI", "--out", trajs)
        out = tmp_path / "r.json"
        assert run("identify", "--data", trajs, "--mode", "limited", "--lambda", "0.25x2dt", "--out", out) == 0
        res = load_result(out)
        assert sorted(res.support) == ["XX", "ZZ"]

    def test_bad_mode(self, three_data, tmp_path):
        assert run("identify", "--data", three_data, "--mode", "partial", "--lambda", "0",
                   "--out", tmp_path / "r.json") == EXIT_USAGE


@pytest.fixture
def single_result(ham_files, tmp_path):
    data = tmp_path / "single.json"
    run("generate", "--hamiltonian", ham_files["single"], "--dt", 0.01, "--steps", 1000, "--out", data)
    out = tmp_path / "single_r.json"
    run("identify", "--data", data, "--mode", "full", "--lambda", "0.05x2dt", "--out", out)
    return data, out


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, rows


class TestForecast:
    def test_header_only(self, single_result, tmp_path):
        _, res = single_result
        out = tmp_path / "f.csv"
        assert run("forecast", "--result", res, "--start", "basis:0", "--horizon", 0,
                   "--observables", "Z", "--out", out) == 0
        assert out.read_text() == "time,Z\n"

    def test_single_spin_closed_form(self, single_result, tmp_path):
        _, res = single_result
        a_hat = load_result(res).coefficients()["Y"]
        out = tmp_path / "f.csv"
        run("forecast", "--result", res, "--start", "basis:0", "--horizon", 900, "--observables", "X,Z", "--out", out)
        header, rows = read_csv(out)
        assert header == ["time", "X", "Z"]
        assert rows.shape == (900, 3)
        np.testing.assert_allclose(rows[:, 2], np.cos(2 * a_hat * rows[:, 0]), atol=1e-3)

    def test_identity_result_constant(self, single_result, tmp_path):
        data, _ = single_result
        res = tmp_path / "id.json"
        run("identify", "--data", data, "--mode", "full", "--lambda", "100", "--out", res)
        assert load_result(res).support == []
        out = tmp_path / "f.csv"
        run("forecast", "--result", res, "--data", data, "--start", "dataset-step:37", "--horizon", 5,
            "--observables", "X,Y,Z", "--out", out)
        _, rows = read_csv(out)
        assert np.ptp(rows[:, 1:], axis=0).max() == 0.0
        assert rows[0, 0] == pytest.approx(0.38)

    def test_start_from_dataset(self, single_result, tmp_path):
        data, res = single_result
        out = tmp_path / "f.csv"
        assert run("forecast", "--result", res, "--data", data, "--start", "dataset-step", "100",
                   "--horizon", 10, "--observables", "Z", "--out", out) == 0
        _, rows = read_csv(out)
        truth = load_dataset(data).column("Z")[101:111]
        np.testing.assert_allclose(rows[:, 1], truth, atol=1e-6)

    def test_initial_state_start(self, single_result, tmp_path):
        data, res = single_result
        out = tmp_path / "f.csv"
        assert run("forecast", "--result", res, "--data", data, "--start", "initial-state",
                   "--horizon", 3, "--observables", "Z", "--out", out) == 0

    def test_qubit_mismatch(self, single_result, tmp_path, capsys):
        _, res = single_result
        code = run("forecast", "--result", res, "--start", "basis:0", "--horizon", 3,
                   "--observables", "ZZ", "--out", tmp_path / "f.csv")
        assert code == EXIT_FAIL
        assert "qubits" in capsys.readouterr().err
        assert not (tmp_path / "f.csv").exists()

    def test_start_needs_data(self, single_result, tmp_path):
        _, res = single_result
        assert run("forecast", "--result", res, "--start", "initial-state", "--horizon", 3,
                   "--observables", "Z", "--out", tmp_path / "f.csv") == EXIT_USAGE


class TestReproduce:
    def test_single_spin(self, tmp_path, capsys):
        assert run("reproduce", "--experiment", "single-spin", "--out-dir", tmp_path) == EXIT_OK
        assert "PASS single-spin" in capsys.readouterr().out
        assert (tmp_path / "single-spin.json").exists()

    def test_unknown_name(self, tmp_path, capsys):
        assert run("reproduce", "--experiment", "nope", "--out-dir", tmp_path) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "single-spin" in err and "five-spin-network" in err
        assert not any(tmp_path.iterdir())

    def test_list(self, capsys):
        assert run("list-experiments") == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 6

    def test_help(self, capsys):
        assert run("--help") == 0
        assert "generate" in capsys.readouterr().out
