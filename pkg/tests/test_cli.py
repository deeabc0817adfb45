import numpy as np
import pandas as pd
import pytest

import cli
import gridSearch
from boosting import load_model
from cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from exceptions import NumericalError


def _tiny_grid():
    return [
        "--iterations-max", "3", "--learning-rates", "0.5", "--min-leaf-values", "1",
        "--max-depth", "2",
    ]


@pytest.fixture
def regression_csv(tmp_path, rng):
    frame = pd.DataFrame({"x": rng.permutation(20).astype(float), "z": rng.normal(size=20)})
    frame["y"] = rng.normal(size=20)
    path = tmp_path / "reg.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    return path, frame


@pytest.fixture
def binary_csv(tmp_path):
    path = tmp_path / "bin.csv"
    assert main(["simulate", "--spec", "bin_classif_fht", "--n", "120", "--seed", "2", "--out", str(path)]) == 0
    return path


def test_simulate_writes_header_and_rows(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--spec", "poisson_f1", "--n", "50", "--seed", "1", "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out)
    assert len(frame) == 50
    assert frame.columns[-1] == "y"
    assert frame.shape[1] == 11
    assert (frame["y"] >= 0).all()


def test_predict_with_no_iterations_is_constant(tmp_path, binary_csv):
    model_path = tmp_path / "m.json"
    preds = tmp_path / "p.csv"
    assert main(["fit", "--data", str(binary_csv), "--loss", "binary", "--iterations", "5",
                 "--max-depth", "2", "--out", str(model_path)]) == EXIT_OK
    assert main(["predict", "--model", str(model_path), "--data", str(binary_csv),
                 "--upto", "0", "--out", str(preds)]) == EXIT_OK
    frame = pd.read_csv(preds)
    assert list(frame.columns) == ["score", "response"]
    assert frame["response"].nunique() == 1
    assert len(frame) == 120


def test_deep_single_tree_reproduces_training_responses(tmp_path, regression_csv, capsys):
    path, frame = regression_csv
    model_path = tmp_path / "m.json"
    preds = tmp_path / "p.csv"
    assert main(["fit", "--data", str(path), "--loss", "squared", "--mode", "gradient",
                 "--iterations", "1", "--learning-rate", "1", "--max-depth", "25",
                 "--out", str(model_path)]) == EXIT_OK
    assert main(["predict", "--model", str(model_path), "--data", str(path), "--out", str(preds)]) == EXIT_OK
    np.testing.assert_allclose(pd.read_csv(preds)["response"], frame["y"], rtol=1e-12, atol=1e-12)

    capsys.readouterr()
    assert main(["evaluate", "--model", str(model_path), "--data", str(path)]) == EXIT_OK
    name, value = capsys.readouterr().out.strip().split(",")
    assert name == "neg_log_likelihood"
    assert float(value) == pytest.approx(0.0, abs=1e-20)


def test_evaluate_classification_prints_error_rate(tmp_path, binary_csv, capsys):
    model_path = tmp_path / "m.json"
    main(["fit", "--data", str(binary_csv), "--loss", "binary", "--iterations", "3", "--out", str(model_path)])
    capsys.readouterr()
    assert main(["evaluate", "--model", str(model_path), "--data", str(binary_csv)]) == EXIT_OK
    name, value = capsys.readouterr().out.strip().split(",")
    assert name == "error_rate"
    assert 0.0 <= float(value) <= 1.0


def test_tobit_thresholds_default_to_response_range(tmp_path, regression_csv):
    path, frame = regression_csv
    model_path = tmp_path / "m.json"
    assert main(["fit", "--data", str(path), "--loss", "tobit", "--iterations", "2",
                 "--out", str(model_path)]) == EXIT_OK
    loss = load_model(model_path).loss
    assert loss.y_lower == frame["y"].min()
    assert loss.y_upper == frame["y"].max()


def test_usage_errors_exit_with_one(tmp_path, regression_csv):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--loss", "squared"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == EXIT_USAGE

    path, _ = regression_csv
    assert main(["fit", "--data", str(path), "--out", str(tmp_path / "m.json")]) == EXIT_USAGE
    assert main(["fit", "--loss", "squared", "--out", str(tmp_path / "m.json")]) == EXIT_USAGE


def test_data_errors_exit_with_two(tmp_path, regression_csv):
    path, _ = regression_csv
    out = str(tmp_path / "m.json")
    assert main(["fit", "--data", str(path), "--target", "nope", "--loss", "squared", "--out", out]) == EXIT_DATA
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--loss", "squared", "--out", out]) == EXIT_DATA
    assert main(["fit", "--data", str(path), "--loss", "poisson", "--out", out]) == EXIT_DATA
    assert main(["fit", "--data", str(path), "--loss", "squared", "--learning-rate", "2", "--out", out]) == EXIT_DATA


def test_tune_writes_score_table(tmp_path, capsys):
    out = tmp_path / "scores.csv"
    model_out = tmp_path / "best.json"
    assert main(["--jobs", "1", "tune", "--spec", "bin_classif_fht", "--n", "90", *_tiny_grid(),
                 "--out", str(out), "--model-out", str(model_out)]) == EXIT_OK
    table = pd.read_csv(out)
    assert list(table.columns) == ["mode", "learning_rate", "min_leaf", "iteration", "valid_score"]
    assert len(table) == 3
    assert "mode=newton" in capsys.readouterr().out
    assert load_model(model_out).n_iterations <= 3


def test_benchmark_is_reproducible_and_writes_traces(tmp_path):
    args = ["--jobs", "1", "benchmark", "--spec", "bin_classif_fht", "--n", "90", *_tiny_grid(),
            "--splits", "2", "--modes", "gradient,newton"]
    first, second = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert main([*args, "--out", str(first)]) == EXIT_OK
    assert main([*args, "--out", str(second), "--trace-dir", str(tmp_path / "traces")]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()

    results = pd.read_csv(first)
    assert len(results) == 4
    for mode in ("gradient", "newton"):
        for split in (0, 1):
            trace = pd.read_csv(tmp_path / "traces" / f"trace_{mode}_split{split}.csv")
            assert list(trace.columns) == ["iteration", "train_loss", "test_score"]
            assert len(trace) == 3


def test_trace_command(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["trace", "--spec", "poisson_r", "--n", "90", "--iterations", "5",
                 "--max-depth", "2", "--out", str(out)]) == EXIT_OK
    trace = pd.read_csv(out)
    assert trace["iteration"].tolist() == [1, 2, 3, 4, 5]

    assert main(["trace", "--spec", "gamma_r", "--n", "90", "--iterations", "5",
                 "--out", str(out)]) == EXIT_USAGE


def test_benchmark_accepts_mode_constraint_pairs(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["--jobs", "1", "benchmark", "--spec", "bin_classif_fht", "--n", "90", *_tiny_grid(),
                 "--splits", "1", "--modes", "newton,newton:hessian-sum",
                 "--out", str(out), "--trace-dir", str(tmp_path / "traces")]) == EXIT_OK
    results = pd.read_csv(out)
    assert results["constraint"].tolist() == ["equivalent", "hessian-sum"]
    assert (tmp_path / "traces" / "trace_newton_split0.csv").exists()
    assert (tmp_path / "traces" / "trace_newton_hessian-sum_split0.csv").exists()

    with pytest.raises(SystemExit) as info:
        main(["benchmark", "--spec", "bin_classif_fht", "--modes", "gradient:hessian-sum", "--out", str(out)])
    assert info.value.code == EXIT_USAGE


def _diverge(*args, **kwargs):
    raise NumericalError("non-finite scores at iteration 1")


def test_numerical_failure_exits_with_three(tmp_path, regression_csv, monkeypatch):
    path, _ = regression_csv
    monkeypatch.setattr(cli, "fit", _diverge)
    assert main(["fit", "--data", str(path), "--loss", "squared",
                 "--out", str(tmp_path / "m.json")]) == EXIT_NUMERIC

    # every grid cell failing aborts the search
    monkeypatch.setattr(gridSearch, "fit", _diverge)
    assert main(["--jobs", "1", "tune", "--spec", "bin_classif_fht", "--n", "90", *_tiny_grid(),
                 "--out", str(tmp_path / "scores.csv")]) == EXIT_NUMERIC
