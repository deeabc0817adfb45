import logging

import numpy as np
import pandas as pd
import pytest

from boosting import FitConfig, UpdateMode, predict
from datagen import fht_multiclass, loss_for, named_simspec, simulate
from dataset import Dataset
from exceptions import ConfigError
from gridSearch import (
    RESULT_COLUMNS,
    TRACE_LEARNING_RATES,
    BenchmarkMethod,
    BenchmarkPlan,
    TuningGrid,
    benchmark,
    grid_search,
    trace_run,
)
from losses import LossSpec
from tree import LeafConstraint
from validation import SplitPlan, validation_score


def _partitions(dataset, seed=0):
    return [dataset.subset(idx) for idx in SplitPlan(seed=seed).split(dataset.n_rows)]


def test_default_grid():
    grid = TuningGrid()
    assert grid.iterations_max == 1000
    assert grid.learning_rates == (1.0, 0.1, 0.01, 0.001)
    assert grid.min_per_leaf_values == (1.0, 5.0, 25.0, 100.0)
    assert grid.max_depth == 5
    assert TuningGrid.untuned().min_per_leaf_values == (1.0,)
    with pytest.raises(ConfigError):
        TuningGrid(learning_rates=(0.0,))
    with pytest.raises(ConfigError):
        TuningGrid(iterations_max=0)


def test_single_cell_grid_picks_validation_argmin(friedman1_regression):
    train, valid, _ = _partitions(friedman1_regression)
    grid = TuningGrid(iterations_max=30, learning_rates=(0.3,), min_per_leaf_values=(5.0,), max_depth=3)
    config, model, table = grid_search(train, valid, LossSpec.squared(), grid, UpdateMode.GRADIENT)

    assert len(table) == 30
    assert list(table.columns) == ["mode", "learning_rate", "min_leaf", "iteration", "valid_score"]
    best_row = table.loc[table["valid_score"].idxmin()]
    assert config.num_iterations == best_row["iteration"]
    assert model.n_iterations == config.num_iterations
    refit_score = validation_score(LossSpec.squared(), predict(model, valid.features), valid.response)
    assert refit_score == best_row["valid_score"]


def test_score_table_size_and_duplicate_cells(binary_data):
    train, valid, _ = _partitions(binary_data)
    loss = LossSpec.binary()
    grid = TuningGrid(iterations_max=10, learning_rates=(0.5, 0.1), min_per_leaf_values=(1.0, 5.0), max_depth=2)
    config, _, table = grid_search(train, valid, loss, grid, UpdateMode.NEWTON)
    assert len(table) == 2 * 2 * 10

    doubled = TuningGrid(iterations_max=10, learning_rates=(0.5, 0.1, 0.5),
                         min_per_leaf_values=(1.0, 5.0, 5.0), max_depth=2)
    again, _, _ = grid_search(train, valid, loss, doubled, UpdateMode.NEWTON)
    assert again == config


def test_ties_prefer_fewer_iterations_smaller_rate_larger_leaf():
    x = np.arange(30.0)[:, None]
    y = (x[:, 0] >= 15).astype(float)
    data = Dataset(x, y)
    grid = TuningGrid(iterations_max=5, learning_rates=(1.0, 0.1), min_per_leaf_values=(1.0, 5.0), max_depth=1)
    config, model, table = grid_search(data, data, LossSpec.binary(), grid, UpdateMode.NEWTON)
    assert table["valid_score"].min() == 0.0
    assert config.num_iterations == 1
    assert config.learning_rate == 0.1
    assert config.tree.min_per_leaf == 5.0
    assert model.n_iterations == 1


def test_gradient_and_newton_agree_on_squared_error(friedman1_regression):
    train, valid, _ = _partitions(friedman1_regression, seed=2)
    loss = LossSpec.squared()
    grid = TuningGrid(iterations_max=25, learning_rates=(1.0, 0.1), min_per_leaf_values=(5.0,), max_depth=3)
    g_config, _, g_table = grid_search(train, valid, loss, grid, UpdateMode.GRADIENT)
    n_config, _, n_table = grid_search(train, valid, loss, grid, UpdateMode.NEWTON)
    assert (g_config.learning_rate, g_config.num_iterations) == (n_config.learning_rate, n_config.num_iterations)
    np.testing.assert_array_equal(g_table["valid_score"].to_numpy(), n_table["valid_score"].to_numpy())


def test_mean_scale_leaf_grid_restriction(caplog):
    grid = TuningGrid()
    loss = LossSpec.mean_scale()
    with caplog.at_level(logging.WARNING):
        assert grid.leaf_values_for(UpdateMode.GRADIENT, loss) == [25.0, 100.0]
    assert "restricting" in caplog.text
    assert grid.leaf_values_for(UpdateMode.HYBRID, loss) == [25.0, 100.0]
    assert grid.leaf_values_for(UpdateMode.NEWTON, loss) == [1.0, 5.0, 25.0, 100.0]
    assert TuningGrid(min_per_leaf_values=(1.0,)).leaf_values_for("gradient", loss) == [25.0, 100.0]
    assert grid.leaf_values_for(UpdateMode.GRADIENT, LossSpec.squared()) == [1.0, 5.0, 25.0, 100.0]


def test_constraint_follows_mode():
    grid = TuningGrid()
    assert grid.constraint_for("newton") is LeafConstraint.EQUIVALENT_WEIGHTED
    assert grid.constraint_for("gradient") is LeafConstraint.RAW_COUNT
    raw = TuningGrid(constraint_mode="hessian-sum")
    assert raw.constraint_for("newton") is LeafConstraint.RAW_HESSIAN_SUM
    assert raw.constraint_for("hybrid") is LeafConstraint.RAW_COUNT
    with pytest.raises(ConfigError):
        TuningGrid(constraint_mode="count")


def test_trace_run(poisson_spec):
    data = simulate(poisson_spec)
    train, _, test = _partitions(data)
    config = FitConfig.for_mode("newton", num_iterations=12, learning_rate=TRACE_LEARNING_RATES["poisson_r"])
    trace = trace_run(train, test, loss_for(data), config)
    assert list(trace.columns) == ["iteration", "train_loss", "test_score"]
    assert trace["iteration"].tolist() == list(range(1, 13))
    assert np.all(np.isfinite(trace["test_score"]))
    assert trace["train_loss"].iloc[-1] < trace["train_loss"].iloc[0]


def test_benchmark_rows_and_determinism():
    data = fht_multiclass(150, seed=1, num_classes=3)
    loss = LossSpec.multiclass(3)
    grid = TuningGrid(iterations_max=4, learning_rates=(0.5,), min_per_leaf_values=(1.0,), max_depth=2)

    plan = BenchmarkPlan(splits=1, modes=("newton",))
    results, traces = benchmark(data, loss, grid, plan)
    assert len(results) == 1
    assert list(results.columns) == RESULT_COLUMNS
    assert traces == {}

    plan = BenchmarkPlan(splits=2, seed=4, modes=("gradient", "newton"), trace_learning_rate=0.5)
    first, traces = benchmark(data, loss, grid, plan)
    second, _ = benchmark(data, loss, grid, plan)
    pd.testing.assert_frame_equal(first, second)
    assert first[["split_id", "mode"]].values.tolist() == [
        [0, "gradient"], [0, "newton"], [1, "gradient"], [1, "newton"],
    ]
    assert set(traces) == {(0, "gradient"), (0, "newton"), (1, "gradient"), (1, "newton")}
    assert all(len(t) == 4 for t in traces.values())
    assert first["constraint"].tolist() == ["count", "equivalent", "count", "equivalent"]


def test_benchmark_plan_validation():
    with pytest.raises(ConfigError):
        BenchmarkPlan(splits=0)
    with pytest.raises(ConfigError):
        BenchmarkPlan(modes=())
    with pytest.raises(ConfigError):
        BenchmarkPlan(trace_learning_rate=2.0)


def test_benchmark_method_parsing():
    assert BenchmarkMethod.parse("newton") == BenchmarkMethod(UpdateMode.NEWTON)
    method = BenchmarkMethod.parse("newton:hessian-sum")
    assert method.mode is UpdateMode.NEWTON
    assert method.constraint is LeafConstraint.RAW_HESSIAN_SUM
    assert method.label == "newton:hessian-sum"
    assert BenchmarkMethod.parse(UpdateMode.HYBRID).label == "hybrid"
    for bad in ("adaboost", "newton:bogus", "newton:count", "gradient:hessian-sum"):
        with pytest.raises(ConfigError):
            BenchmarkMethod.parse(bad)
    assert [m.label for m in BenchmarkPlan().modes] == [
        "gradient", "hybrid", "newton", "newton:hessian-sum",
    ]
    with pytest.raises(ConfigError):
        BenchmarkPlan(modes=("newton", "newton:equivalent", "newton"))


def test_benchmark_compares_both_newton_constraints():
    data = fht_multiclass(150, seed=1, num_classes=3)
    grid = TuningGrid(iterations_max=3, learning_rates=(0.5,), min_per_leaf_values=(1.0,), max_depth=2)
    plan = BenchmarkPlan(splits=2, modes=("newton", "newton:hessian-sum"), trace_learning_rate=0.5)
    results, traces = benchmark(data, LossSpec.multiclass(3), grid, plan)
    assert results[["split_id", "mode", "constraint"]].values.tolist() == [
        [0, "newton", "equivalent"], [0, "newton", "hessian-sum"],
        [1, "newton", "equivalent"], [1, "newton", "hessian-sum"],
    ]
    assert results["test_score"].notna().all()
    assert set(traces) == {
        (0, "newton"), (0, "newton:hessian-sum"), (1, "newton"), (1, "newton:hessian-sum"),
    }


def test_parallel_runs_match_serial_runs():
    data = fht_multiclass(150, seed=1, num_classes=3)
    loss = LossSpec.multiclass(3)
    grid = TuningGrid(iterations_max=3, learning_rates=(0.5, 0.1), min_per_leaf_values=(1.0, 5.0), max_depth=2)
    train, valid, _ = _partitions(data)

    serial_config, _, serial_table = grid_search(train, valid, loss, grid, UpdateMode.NEWTON, n_jobs=1)
    threaded_config, _, threaded_table = grid_search(train, valid, loss, grid, UpdateMode.NEWTON, n_jobs=2)
    assert threaded_config == serial_config
    pd.testing.assert_frame_equal(threaded_table, serial_table)

    plan = BenchmarkPlan(splits=2, modes=("gradient", "newton", "newton:hessian-sum"))
    serial, _ = benchmark(data, loss, grid, plan, n_jobs=1)
    parallel, _ = benchmark(data, loss, grid, plan, n_jobs=2)
    pd.testing.assert_frame_equal(parallel, serial)


@pytest.mark.slow
def test_newton_beats_gradient_on_fht_multiclass():
    data = fht_multiclass(3000, seed=0)
    grid = TuningGrid(iterations_max=300, learning_rates=(0.1,), min_per_leaf_values=(1.0, 5.0, 25.0))
    plan = BenchmarkPlan(splits=10, modes=("gradient", "hybrid", "newton"))
    results, _ = benchmark(data, LossSpec.multiclass(5), grid, plan, n_jobs=0)
    by_mode = results.groupby("mode")["test_score"].mean()
    assert by_mode["newton"] <= by_mode["hybrid"] <= by_mode["gradient"]
    wide = results.pivot(index="split_id", columns="mode", values="test_score")
    assert ((wide["newton"] - wide["gradient"]) < 0).sum() >= 8


@pytest.mark.slow
def test_mean_scale_newton_overfits_late_but_reaches_lower_minimum():
    data = simulate(named_simspec("msr_r", 6000, seed=0))
    loss = loss_for(data)
    wins = 0
    for split in range(10):
        train, _, test = _partitions(data, seed=split)
        curves = {}
        for mode, leaf in (("newton", 25.0), ("gradient", 25.0)):
            config = FitConfig.for_mode(mode, num_iterations=1000, learning_rate=TRACE_LEARNING_RATES["msr_r"],
                                        min_per_leaf=leaf)
            curves[mode] = trace_run(train, test, loss, config)["test_score"].to_numpy()
        newton = curves["newton"]
        assert newton.argmin() < len(newton) - 1
        assert newton[-1] > newton.min()
        wins += newton.min() <= curves["gradient"].min()
    assert wins >= 7
