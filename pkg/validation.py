from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.metrics import zero_one_loss

from exceptions import ConfigError, InputError
from losses import LossFamily, LossSpec, per_row_loss, responses_from_scores



@dataclass(frozen=True)
class SplitPlan:
    """
    Random train / validation / test partition of n rows.

    fractions are shares of n (default a third each); caps optionally limit
    the size of each partition after the shuffle.
    """

    seed: int = 0
    fractions: Tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    caps: Optional[Tuple[Optional[int], Optional[int], Optional[int]]] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigError(f"Need three nonnegative split fractions, got {self.fractions}.")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"Split fractions must sum to 1, got {sum(self.fractions)}.")
        if self.caps is not None:
            if len(self.caps) != 3 or any(c is not None and c < 1 for c in self.caps):
                raise ConfigError(f"Caps must be three positive sizes or None, got {self.caps}.")

    def split(self, n):
        """
        Returns:
            (train, valid, test) index arrays; disjoint, and covering 0..n-1
            when no caps are set.
        """
        if n < 3:
            raise InputError(f"Need at least 3 rows to split, got {n}.")
        perm = np.random.Generator(np.random.PCG64(self.seed)).permutation(n)
        n_train = int(round(self.fractions[0] * n))
        n_valid = int(round(self.fractions[1] * n))
        n_train = min(n_train, n)
        n_valid = min(n_valid, n - n_train)
        parts = [perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]]
        if self.caps is not None:
            parts = [p if cap is None else p[:cap] for p, cap in zip(parts, self.caps)]
        if any(len(p) == 0 for p in parts):
            raise InputError(f"Split of {n} rows with fractions {self.fractions} leaves a partition empty.")
        return tuple(parts)


def error_rate(predictions, truth):
    """Fraction of misclassified labels."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if truth.size == 0:
        raise InputError("Cannot compute an error rate on empty input.")
    if predictions.shape != truth.shape:
        raise InputError(f"Got {predictions.shape[0]} predictions for {truth.shape[0]} labels.")
    return float(zero_one_loss(truth, predictions))


def predict_labels(loss: LossSpec, scores):
    """
    Class labels from scores: p > 0.5 for binary, argmax of the softmax
    (lowest index on ties) for multiclass.
    """
    probs = responses_from_scores(loss, scores)
    if loss.family is LossFamily.BINARY_LOGISTIC:
        return (probs > 0.5).astype(float)
    if loss.family is LossFamily.MULTICLASS_SOFTMAX:
        return np.argmax(probs, axis=1).astype(float)
    raise ConfigError(f"{loss.family.value} is not a classification loss.")


def neg_log_likelihood(loss: LossSpec, scores, truth):
    """Mean per-observation loss."""
    truth = np.asarray(truth, dtype=float)
    if truth.size == 0:
        raise InputError("Cannot compute a likelihood on empty input.")
    return float(per_row_loss(loss, truth, scores).mean())


def validation_score(loss: LossSpec, scores, truth):
    """
    Model-selection criterion: error rate for classification losses and
    mean negative log-likelihood otherwise. Smaller is better.
    """
    if loss.family.is_classification:
        return error_rate(predict_labels(loss, scores), truth)
    return neg_log_likelihood(loss, scores, truth)
