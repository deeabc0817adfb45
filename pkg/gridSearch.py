import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from boosting import FitConfig, UpdateMode, fit, predict, staged_predict
from config import resolve_n_jobs
from dataset import Dataset
from exceptions import ConfigError, NumericalError, TriboostError
from losses import LossFamily, LossSpec
from tree import LeafConstraint
from validation import SplitPlan, validation_score

logger = logging.getLogger(__name__)

SCORE_TABLE_COLUMNS = ["mode", "learning_rate", "min_leaf", "iteration", "valid_score"]
RESULT_COLUMNS = [
    "split_id", "mode", "learning_rate", "min_leaf", "constraint",
    "chosen_M", "valid_score", "test_score",
]
TRACE_COLUMNS = ["iteration", "train_loss", "test_score"]

# Minimum samples per leaf allowed for mean-scale regression under gradient and hybrid updates.
MEAN_SCALE_MIN_LEAF = (25.0, 100.0)

# Fixed learning rates of the convergence-trace experiment.
TRACE_LEARNING_RATES = {
    "ijcnn": 0.5,
    "bin_classif_fht": 0.5,
    "digits": 0.5,
    "letter": 0.1,
    "satimage": 0.3,
    "smartphone": 0.5,
    "poisson_r": 0.03,
    "malnutrition": 0.03,
    "msr_r": 0.05,
}


@dataclass(frozen=True)
class TuningGrid:
    """
    Search space for (M, nu, S). M runs over 1..iterations_max through
    staged predictions. constraint_mode overrides the newton leaf constraint
    (equivalent by default); gradient and hybrid always use the raw count.
    An explicit override passed to constraint_for takes precedence.
    """

    iterations_max: int = 1000
    learning_rates: Tuple[float, ...] = (1.0, 0.1, 0.01, 0.001)
    min_per_leaf_values: Tuple[float, ...] = (1.0, 5.0, 25.0, 100.0)
    constraint_mode: Optional[LeafConstraint] = None
    max_depth: int = 5

    def __post_init__(self):
        object.__setattr__(self, "learning_rates", tuple(float(v) for v in self.learning_rates))
        object.__setattr__(self, "min_per_leaf_values", tuple(float(v) for v in self.min_per_leaf_values))
        if self.constraint_mode is not None:
            object.__setattr__(self, "constraint_mode", LeafConstraint(self.constraint_mode))
        self.validate()

    @classmethod
    def untuned(cls, iterations_max=1000, learning_rates=(1.0, 0.1, 0.01, 0.001), **kwargs):
        """Grid with the leaf constraint fixed at its default S = 1."""
        return cls(iterations_max=iterations_max, learning_rates=learning_rates,
                   min_per_leaf_values=(1.0,), **kwargs)

    def validate(self):
        if self.iterations_max < 1:
            raise ConfigError(f"iterations_max must be positive, got {self.iterations_max}.")
        if not self.learning_rates or not self.min_per_leaf_values:
            raise ConfigError("Tuning grid needs at least one learning rate and one leaf minimum.")
        if any(not 0 < v <= 1 for v in self.learning_rates):
            raise ConfigError(f"Learning rates must lie in (0, 1], got {self.learning_rates}.")
        if any(v < 0 for v in self.min_per_leaf_values):
            raise ConfigError(f"Leaf minimums must be nonnegative, got {self.min_per_leaf_values}.")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be positive, got {self.max_depth}.")
        if self.constraint_mode is LeafConstraint.RAW_COUNT:
            raise ConfigError("The newton constraint override must be 'equivalent' or 'hessian-sum'.")

    def constraint_for(self, mode, override=None):
        if override is not None:
            return LeafConstraint(override)
        if UpdateMode(mode) is UpdateMode.NEWTON:
            return self.constraint_mode or LeafConstraint.EQUIVALENT_WEIGHTED
        return LeafConstraint.RAW_COUNT

    def leaf_values_for(self, mode, loss: LossSpec):
        """Deduplicated S values; mean-scale gradient/hybrid fits are restricted to {25, 100}."""
        values = list(dict.fromkeys(self.min_per_leaf_values))
        if loss.family is LossFamily.MEAN_SCALE_GAUSSIAN and UpdateMode(mode) is not UpdateMode.NEWTON:
            kept = [v for v in values if v in MEAN_SCALE_MIN_LEAF]
            if kept != values:
                restricted = kept or list(MEAN_SCALE_MIN_LEAF)
                logger.warning(
                    "Mean-scale %s boosting: restricting min leaf values %s to %s",
                    UpdateMode(mode).value, values, restricted,
                )
                values = restricted
        return values

    def cells(self, mode, loss: LossSpec):
        return [
            (nu, s)
            for nu in dict.fromkeys(self.learning_rates)
            for s in self.leaf_values_for(mode, loss)
        ]


def _fit_cell(train: Dataset, valid: Dataset, loss, mode, grid: TuningGrid, nu, s, constraint=None):
    config = FitConfig.for_mode(
        mode,
        num_iterations=grid.iterations_max,
        learning_rate=nu,
        max_depth=grid.max_depth,
        min_per_leaf=s,
        leaf_constraint=grid.constraint_for(mode, constraint),
    )
    model = fit(train, loss, config)
    scores = np.array([
        validation_score(loss, staged, valid.response)
        for staged in staged_predict(model, valid.features)
    ])
    return model, scores


def grid_search(train: Dataset, valid: Dataset, loss: LossSpec, grid: TuningGrid,
                mode=UpdateMode.NEWTON, n_jobs=1, constraint=None):
    """
    Choose (M, nu, S) on the validation data.

    Each (nu, S) cell is fit once with M = iterations_max; the validation
    score of every staged prediction m = 1..M is recorded. The winner is the
    smallest score, ties going to smaller m, then smaller nu, then larger S.
    constraint, when given, replaces the grid's leaf constraint for this mode.

    Returns:
        (best_config, best_model, score_table): the FitConfig with the chosen
        num_iterations, the winning model truncated to it, and a DataFrame
        with one row per (nu, S, m).
    """
    mode = UpdateMode(mode)
    if train.n_rows == 0 or valid.n_rows == 0:
        raise ConfigError("Training and validation partitions must be nonempty.")
    cells = grid.cells(mode, loss)
    logger.info("Grid search (%s): %d cells, M up to %d", mode.value, len(cells), grid.iterations_max)

    def run(nu, s):
        try:
            return _fit_cell(train, valid, loss, mode, grid, nu, s, constraint)
        except NumericalError as exc:
            logger.warning("Cell nu=%g, S=%g failed: %s", nu, s, exc)
            return None, exc

    outcomes = Parallel(n_jobs=resolve_n_jobs(n_jobs), prefer="threads")(
        delayed(run)(nu, s) for nu, s in cells
    )

    frames = []
    best_key, best = None, None
    failures = []
    m_index = np.arange(1, grid.iterations_max + 1)
    for (nu, s), (model, scores) in zip(cells, outcomes):
        if model is None:
            failures.append(f"(nu={nu:g}, S={s:g}): {scores}")
            scores = np.full(grid.iterations_max, np.nan)
        else:
            m = int(np.argmin(scores)) + 1
            key = (scores[m - 1], m, nu, -s)
            if best_key is None or key < best_key:
                best_key, best = key, (model, m)
            logger.debug("Cell nu=%g, S=%g: best m=%d, score %.6g", nu, s, m, scores[m - 1])
        frames.append(pd.DataFrame({
            "mode": mode.value,
            "learning_rate": nu,
            "min_leaf": s,
            "iteration": m_index,
            "valid_score": scores,
        }))

    if best is None:
        raise NumericalError("Every grid cell diverged: " + "; ".join(failures))

    model, m = best
    best_config = replace(model.config, num_iterations=m)
    logger.info(
        "Selected nu=%g, S=%g, M=%d with validation score %.6g",
        best_config.learning_rate, best_config.tree.min_per_leaf, m, best_key[0],
    )
    score_table = pd.concat(frames, ignore_index=True)[SCORE_TABLE_COLUMNS]
    return best_config, model.truncate(m), score_table


def trace_run(train: Dataset, test: Dataset, loss: LossSpec, config: FitConfig):
    """
    Training loss (mean per observation) and test score after every
    iteration of one fit with a fixed configuration.
    """
    model = fit(train, loss, config)
    test_scores = [
        validation_score(loss, staged, test.response)
        for staged in staged_predict(model, test.features)
    ]
    return pd.DataFrame({
        "iteration": np.arange(1, model.n_iterations + 1),
        "train_loss": model.train_loss / train.n_rows,
        "test_score": test_scores,
    })[TRACE_COLUMNS]


@dataclass(frozen=True)
class BenchmarkMethod:
    """
    One compared method: an update mode plus an optional leaf constraint.
    Written as "newton" or "newton:hessian-sum"; without a constraint the
    grid's choice for the mode applies.
    """

    mode: UpdateMode
    constraint: Optional[LeafConstraint] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", UpdateMode(self.mode))
            if self.constraint is not None:
                object.__setattr__(self, "constraint", LeafConstraint(self.constraint))
        except ValueError:
            raise ConfigError(
                f"Unknown benchmark method {self.mode!r} with constraint {self.constraint!r}."
            ) from None
        if self.constraint is None:
            return
        newton = self.mode is UpdateMode.NEWTON
        if newton == (self.constraint is LeafConstraint.RAW_COUNT):
            raise ConfigError(f"{self.mode.value} boosting cannot use the '{self.constraint.value}' constraint.")

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, UpdateMode):
            return cls(value)
        mode, _, constraint = str(value).partition(":")
        return cls(mode.strip(), constraint.strip() or None)

    @property
    def label(self):
        if self.constraint is None:
            return self.mode.value
        return f"{self.mode.value}:{self.constraint.value}"


DEFAULT_METHODS = (
    BenchmarkMethod(UpdateMode.GRADIENT),
    BenchmarkMethod(UpdateMode.HYBRID),
    BenchmarkMethod(UpdateMode.NEWTON),
    BenchmarkMethod(UpdateMode.NEWTON, LeafConstraint.RAW_HESSIAN_SUM),
)


@dataclass(frozen=True)
class BenchmarkPlan:
    """Repeated random splits of one dataset, seeds seed, seed + 1, ..."""

    splits: int = 1
    seed: int = 0
    fractions: Tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    caps: Optional[Tuple[Optional[int], Optional[int], Optional[int]]] = None
    trace_learning_rate: Optional[float] = None
    modes: Tuple[BenchmarkMethod, ...] = DEFAULT_METHODS

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(BenchmarkMethod.parse(m) for m in self.modes))
        if self.splits < 1:
            raise ConfigError(f"splits must be at least 1, got {self.splits}.")
        if not self.modes:
            raise ConfigError("Benchmark needs at least one update mode.")
        if len({m.label for m in self.modes}) != len(self.modes):
            raise ConfigError(f"Benchmark methods repeat: {[m.label for m in self.modes]}.")
        if self.trace_learning_rate is not None and not 0 < self.trace_learning_rate <= 1:
            raise ConfigError(f"Trace learning rate must lie in (0, 1], got {self.trace_learning_rate}.")

    def split_plan(self, split_id):
        return SplitPlan(seed=self.seed + split_id, fractions=self.fractions, caps=self.caps)


def _benchmark_job(dataset: Dataset, loss, grid, plan: BenchmarkPlan, split_id, method: BenchmarkMethod):
    train_idx, valid_idx, test_idx = plan.split_plan(split_id).split(dataset.n_rows)
    train, valid, test = dataset.subset(train_idx), dataset.subset(valid_idx), dataset.subset(test_idx)
    mode = method.mode
    row = {
        "split_id": split_id,
        "mode": mode.value,
        "learning_rate": math.nan,
        "min_leaf": math.nan,
        "constraint": grid.constraint_for(mode, method.constraint).value,
        "chosen_M": 0,
        "valid_score": math.nan,
        "test_score": math.nan,
    }
    trace = None
    try:
        config, model, score_table = grid_search(train, valid, loss, grid, mode, constraint=method.constraint)
        test_scores = predict(model, test.features)
        row.update(
            learning_rate=config.learning_rate,
            min_leaf=config.tree.min_per_leaf,
            chosen_M=config.num_iterations,
            valid_score=float(score_table["valid_score"].min()),
            test_score=validation_score(loss, test_scores, test.response),
        )
        if plan.trace_learning_rate is not None:
            trace_config = FitConfig.for_mode(
                mode,
                num_iterations=grid.iterations_max,
                learning_rate=plan.trace_learning_rate,
                max_depth=grid.max_depth,
                min_per_leaf=config.tree.min_per_leaf,
                leaf_constraint=config.tree.leaf_constraint,
            )
            trace = trace_run(train, test, loss, trace_config)
    except TriboostError as exc:
        logger.warning("Split %d, %s boosting failed: %s", split_id, method.label, exc)
    return row, trace


def benchmark(dataset: Dataset, loss: LossSpec, grid: TuningGrid, plan: BenchmarkPlan, n_jobs=1):
    """
    Tune and test every method (mode, optionally with its own leaf
    constraint) on every split.

    Returns:
        (results, traces): a DataFrame with one row per (split, method) in
        that order, and a dict {(split_id, method label): trace DataFrame} that is
        empty unless plan.trace_learning_rate is set. Failed jobs keep their
        row with NaN scores.
    """
    jobs = [(split_id, method) for split_id in range(plan.splits) for method in plan.modes]
    logger.info("Benchmark: %d splits x %d methods on n=%d", plan.splits, len(plan.modes), dataset.n_rows)
    outcomes = Parallel(n_jobs=resolve_n_jobs(n_jobs))(
        delayed(_benchmark_job)(dataset, loss, grid, plan, split_id, method) for split_id, method in jobs
    )
    results = pd.DataFrame([row for row, _ in outcomes], columns=RESULT_COLUMNS)
    traces = {
        (split_id, method.label): trace
        for (split_id, method), (_, trace) in zip(jobs, outcomes)
        if trace is not None
    }
    return results, traces
