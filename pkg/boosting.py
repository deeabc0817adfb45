import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize

from config import DEFAULT_HESSIAN_FLOOR, resolve_n_jobs
from exceptions import ConfigError, InputError, NumericalError
from losses import LossFamily, LossSpec, check_responses, loss_terms, per_row_loss
from tree import (
    LeafConstraint,
    RegressionTree,
    TreeConfig,
    fit_tree,
    leaf_value,
    normalize_weights,
)

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1

# Degenerate responses (one class only, all-zero counts, zero spread) put F0 here.
_DEGENERATE_SCORE = 15.0
_INIT_TOLERANCE = 1e-10
_INIT_MAX_STEPS = 100

__all__ = [
    "UpdateMode",
    "FitConfig",
    "BoostedModel",
    "init_scores",
    "pseudo_targets",
    "normalize_weights",
    "fit",
    "predict",
    "staged_predict",
    "save_model",
    "load_model",
]


class UpdateMode(str, Enum):
    GRADIENT = "gradient"
    NEWTON = "newton"
    HYBRID = "hybrid"


def default_constraint(mode):
    if UpdateMode(mode) is UpdateMode.NEWTON:
        return LeafConstraint.EQUIVALENT_WEIGHTED
    return LeafConstraint.RAW_COUNT


@dataclass(frozen=True)
class FitConfig:
    mode: UpdateMode = UpdateMode.NEWTON
    num_iterations: int = 100
    learning_rate: float = 0.1
    tree: TreeConfig = field(
        default_factory=lambda: TreeConfig(leaf_constraint=LeafConstraint.EQUIVALENT_WEIGHTED)
    )
    hessian_floor: float = DEFAULT_HESSIAN_FLOOR
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", UpdateMode(self.mode))
        self.validate()

    @classmethod
    def for_mode(cls, mode, num_iterations=100, learning_rate=0.1, max_depth=5,
                 min_per_leaf=1.0, leaf_constraint=None, **kwargs):
        """Build a config, defaulting the leaf constraint to the one the mode expects."""
        mode = UpdateMode(mode)
        if leaf_constraint is None:
            leaf_constraint = default_constraint(mode)
        tree = TreeConfig(max_depth=max_depth, leaf_constraint=leaf_constraint,
                          min_per_leaf=min_per_leaf)
        return cls(mode=mode, num_iterations=num_iterations, learning_rate=learning_rate,
                   tree=tree, **kwargs)

    def validate(self):
        if int(self.num_iterations) != self.num_iterations or self.num_iterations < 1:
            raise ConfigError(f"num_iterations must be a positive integer, got {self.num_iterations}.")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must lie in (0, 1], got {self.learning_rate}.")
        if not self.hessian_floor > 0:
            raise ConfigError(f"hessian_floor must be positive, got {self.hessian_floor}.")

        constraint = self.tree.leaf_constraint
        if self.mode in (UpdateMode.GRADIENT, UpdateMode.HYBRID):
            if constraint is not LeafConstraint.RAW_COUNT:
                raise ConfigError(
                    f"{self.mode.value} boosting searches tree structure on unit weights and "
                    f"needs the '{LeafConstraint.RAW_COUNT.value}' leaf constraint, "
                    f"got '{constraint.value}'."
                )
        elif constraint is LeafConstraint.RAW_COUNT:
            raise ConfigError(
                "newton boosting needs the 'equivalent' or 'hessian-sum' leaf constraint."
            )

    def to_dict(self):
        return {
            "mode": self.mode.value,
            "num_iterations": int(self.num_iterations),
            "learning_rate": float(self.learning_rate),
            "tree": self.tree.to_dict(),
            "hessian_floor": float(self.hessian_floor),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            mode=UpdateMode(payload["mode"]),
            num_iterations=payload["num_iterations"],
            learning_rate=payload["learning_rate"],
            tree=TreeConfig.from_dict(payload["tree"]),
            hessian_floor=payload.get("hessian_floor", DEFAULT_HESSIAN_FLOOR),
        )


@dataclass(frozen=True)
class BoostedModel:
    """
    F0 plus M x d trees with the learning rate already applied to their values.
    train_loss[m - 1] is the summed training loss after iteration m.
    """

    loss: LossSpec
    f0: np.ndarray
    trees: List[List[RegressionTree]]
    config: FitConfig
    train_loss: np.ndarray
    feature_names: Optional[List[str]] = None
    dummy_columns: Optional[List[str]] = None

    @property
    def n_iterations(self):
        return len(self.trees)

    @property
    def n_features(self):
        if self.trees:
            return self.trees[0][0].n_features
        return len(self.feature_names) if self.feature_names is not None else None

    def truncate(self, num_iterations):
        if not 0 <= num_iterations <= self.n_iterations:
            raise InputError(
                f"Cannot truncate a {self.n_iterations}-iteration model to {num_iterations}."
            )
        config = self.config
        if num_iterations >= 1:
            config = replace(config, num_iterations=num_iterations)
        return replace(
            self,
            trees=self.trees[:num_iterations],
            train_loss=self.train_loss[:num_iterations],
            config=config,
        )

    def to_dict(self):
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "loss": self.loss.to_dict(),
            "config": self.config.to_dict(),
            "f0": self.f0.tolist(),
            "trees": [[t.to_dict() for t in stage] for stage in self.trees],
            "train_loss": self.train_loss.tolist(),
            "feature_names": self.feature_names,
            "dummy_columns": self.dummy_columns,
        }

    @classmethod
    def from_dict(cls, payload):
        version = payload.get("schema_version")
        if version != MODEL_SCHEMA_VERSION:
            raise InputError(
                f"Unsupported model schema version {version!r}; expected {MODEL_SCHEMA_VERSION}."
            )
        return cls(
            loss=LossSpec.from_dict(payload["loss"]),
            f0=np.asarray(payload["f0"], dtype=float),
            trees=[[RegressionTree.from_dict(t) for t in stage] for stage in payload["trees"]],
            config=FitConfig.from_dict(payload["config"]),
            train_loss=np.asarray(payload["train_loss"], dtype=float),
            feature_names=payload.get("feature_names"),
            dummy_columns=payload.get("dummy_columns"),
        )


def init_scores(loss: LossSpec, responses):
    """
    Constant score vector minimising the empirical risk.

    Closed forms are used where they exist (mean, logit of the mean, log of
    the mean, log class frequencies, Gaussian MLE); the Tobit constant is
    found with scipy's Newton root finder. Degenerate samples, e.g. a single class
    for binary classification, are clamped to +-15 with a warning.
    """
    y = check_responses(loss, responses)
    if y.shape[0] == 0:
        raise InputError("Cannot initialise scores from an empty response vector.")

    family = loss.family
    if family is LossFamily.SQUARED_ERROR:
        return np.array([y.mean()])

    if family is LossFamily.BINARY_LOGISTIC:
        p = y.mean()
        if p <= 0.0 or p >= 1.0:
            logger.warning("All binary responses equal %d; clamping F0 to +-%g", int(p), _DEGENERATE_SCORE)
            return np.array([_DEGENERATE_SCORE if p >= 1.0 else -_DEGENERATE_SCORE])
        return np.array([math.log(p / (1.0 - p))])

    if family is LossFamily.MULTICLASS_SOFTMAX:
        counts = np.bincount(y.astype(int), minlength=loss.num_outputs).astype(float)
        freq = counts / counts.sum()
        f0 = np.full(loss.num_outputs, -_DEGENERATE_SCORE)
        present = freq > 0
        f0[present] = np.log(freq[present])
        if not np.all(present):
            logger.warning(
                "Classes %s absent from the responses; their F0 is clamped to %g",
                np.flatnonzero(~present).tolist(), -_DEGENERATE_SCORE,
            )
        return f0

    if family in (LossFamily.POISSON, LossFamily.GAMMA):
        mean = y.mean()
        if mean <= 0:
            logger.warning("All counts are zero; clamping F0 to %g", -_DEGENERATE_SCORE)
            return np.array([-_DEGENERATE_SCORE])
        return np.array([math.log(mean)])

    if family is LossFamily.MEAN_SCALE_GAUSSIAN:
        sd = y.std()
        if sd <= 0:
            logger.warning("Responses have zero spread; clamping log-sd F0 to %g", -_DEGENERATE_SCORE)
            return np.array([y.mean(), -_DEGENERATE_SCORE])
        return np.array([y.mean(), math.log(sd)])

    return np.array([_newton_constant(loss, y, float(y.mean()))])


def _newton_constant(loss, y, start):
    n = y.shape[0]

    def mean_gradient(f):
        return float(loss_terms(loss, y, np.full(n, f), check=False)[1].mean())

    def mean_hessian(f):
        return max(float(loss_terms(loss, y, np.full(n, f), check=False)[2].mean()), DEFAULT_HESSIAN_FLOOR)

    f, result = optimize.newton(
        mean_gradient, start, fprime=mean_hessian, tol=_INIT_TOLERANCE,
        maxiter=_INIT_MAX_STEPS, full_output=True, disp=False,
    )
    if not result.converged:
        logger.warning("F0 Newton iteration stopped after %d steps: %s", result.iterations, result.flag)
    return float(f)


def pseudo_targets(mode, gradients, hessians, floor=DEFAULT_HESSIAN_FLOOR):
    """
    Regression targets and weights handed to the tree learner.

    Gradient -> (-g, 1); Newton -> (-g / max(h, floor), max(h, floor)).
    Hybrid returns the gradient pair used for the structure search; its leaf
    refit uses the Newton pair.
    """
    g = np.asarray(gradients, dtype=float)
    mode = UpdateMode(mode)
    if mode is UpdateMode.NEWTON:
        h = np.maximum(np.asarray(hessians, dtype=float), floor)
        return -g / h, h
    return -g, np.ones_like(g)


def _fit_dimension(features, g, h, config: FitConfig):
    if config.mode is UpdateMode.HYBRID:
        targets, weights = pseudo_targets(UpdateMode.GRADIENT, g, h, config.hessian_floor)
        tree = fit_tree(features, targets, weights, config.tree)
        newton_t, newton_w = pseudo_targets(UpdateMode.NEWTON, g, h, config.hessian_floor)
        leaves = tree.apply(features)
        refit = {}
        for leaf in tree.leaves:
            members = leaves == leaf
            refit[int(leaf)] = leaf_value(newton_t[members], newton_w[members])
        tree = tree.with_leaf_values(refit)
    else:
        targets, weights = pseudo_targets(config.mode, g, h, config.hessian_floor)
        tree = fit_tree(features, targets, weights, config.tree)
    return tree.scaled(config.learning_rate)


def fit(dataset, loss: LossSpec, config: FitConfig) -> BoostedModel:
    """
    Stagewise boosting. Each iteration evaluates g and h at the current
    scores, fits one tree per output dimension from that shared snapshot and
    adds the shrunken trees to the scores.
    """
    features = np.asarray(dataset.features, dtype=float)
    y = check_responses(loss, dataset.response)
    n = y.shape[0]
    if n == 0 or features.ndim != 2 or features.shape[0] != n:
        raise InputError(
            f"Dataset needs matching nonempty features and responses, got {features.shape} and {y.shape}."
        )
    if not np.all(np.isfinite(features)):
        raise InputError("Features contain missing or non-finite values.")

    d = loss.num_outputs
    logger.info(
        "Fitting %s boosting (%s loss): M=%d, nu=%g, depth=%d, %s S=%g on n=%d, p=%d",
        config.mode.value, loss.family.value, config.num_iterations, config.learning_rate,
        config.tree.max_depth, config.tree.leaf_constraint.value, config.tree.min_per_leaf,
        n, features.shape[1],
    )

    f0 = init_scores(loss, y)
    scores = np.tile(f0, (n, 1))
    trees = []
    trace = np.empty(config.num_iterations)

    n_jobs = resolve_n_jobs(config.n_jobs) if d > 1 else 1
    with Parallel(n_jobs=n_jobs, prefer="threads") as parallel:
        for m in range(1, config.num_iterations + 1):
            _, g, h = loss_terms(loss, y, scores, check=False)
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
                raise NumericalError(f"Non-finite gradient or Hessian at iteration {m}.")

            if n_jobs == 1:
                stage = [_fit_dimension(features, g[:, k], h[:, k], config) for k in range(d)]
            else:
                stage = parallel(
                    delayed(_fit_dimension)(features, g[:, k], h[:, k], config) for k in range(d)
                )
            for k, tree in enumerate(stage):
                scores[:, k] += tree.predict(features)
            if not np.all(np.isfinite(scores)):
                raise NumericalError(f"Scores became non-finite at iteration {m}.")

            trace[m - 1] = per_row_loss(loss, y, scores, check=False).sum()
            trees.append(stage)
            if m % 100 == 0:
                logger.debug("iteration %d: training loss %.6g", m, trace[m - 1])

    logger.info("Finished %d iterations, training loss %.6g", config.num_iterations, trace[-1])
    return BoostedModel(
        loss=loss,
        f0=f0,
        trees=trees,
        config=config,
        train_loss=trace,
        feature_names=list(getattr(dataset, "feature_names", None) or []) or None,
        dummy_columns=list(getattr(dataset, "dummy_columns", None) or []) or None,
    )


def _check_features(model: BoostedModel, features):
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise InputError(f"Features must be a 2-D matrix, got shape {features.shape}.")
    width = model.n_features
    if width is not None and features.shape[1] != width:
        raise InputError(f"Feature matrix has width {features.shape[1]}, model expects {width}.")
    return features


def staged_predict(model: BoostedModel, features, include_initial=False):
    """Yield the n x d score matrix after each iteration (after F0 too if asked)."""
    features = _check_features(model, features)
    scores = np.tile(model.f0, (features.shape[0], 1))
    if include_initial:
        yield scores.copy()
    for stage in model.trees:
        for k, tree in enumerate(stage):
            scores[:, k] += tree.predict(features)
        yield scores.copy()


def predict(model: BoostedModel, features, upto=None):
    """Scores f0 + sum of the first `upto` iterations' trees (all of them by default)."""
    features = _check_features(model, features)
    if upto is None:
        upto = model.n_iterations
    if not 0 <= upto <= model.n_iterations:
        raise InputError(f"upto must lie in 0..{model.n_iterations}, got {upto}.")
    scores = np.tile(model.f0, (features.shape[0], 1))
    for stage in model.trees[:upto]:
        for k, tree in enumerate(stage):
            scores[:, k] += tree.predict(features)
    return scores


def dumps_model(model: BoostedModel):
    return json.dumps(model.to_dict(), sort_keys=True, allow_nan=False)


def save_model(model: BoostedModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))
    logger.info("Saved %d-iteration model to %s", model.n_iterations, path)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} is not a model file: {exc}") from exc
    return BoostedModel.from_dict(payload)
