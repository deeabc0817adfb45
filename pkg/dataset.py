import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from customOneHotEncoder import CustomOneHotEncoder
from exceptions import InputError
from losses import LossFamily, LossSpec, responses_from_scores

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double.
FLOAT_FORMAT = "%.17g"


@dataclass
class Dataset:
    """Dense feature matrix, response vector and column metadata."""

    features: np.ndarray
    response: np.ndarray
    feature_names: List[str] = field(default_factory=list)
    family: Optional[LossFamily] = None
    target_name: str = "y"
    meta: dict = field(default_factory=dict)
    dummy_columns: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.response = np.asarray(self.response, dtype=float)
        if self.features.ndim != 2:
            raise InputError(f"Features must be a 2-D matrix, got shape {self.features.shape}.")
        if self.response.shape != (self.features.shape[0],):
            raise InputError(
                f"Response length {self.response.shape} does not match {self.features.shape[0]} rows."
            )
        if not self.feature_names:
            self.feature_names = [f"x{j + 1}" for j in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise InputError(
                f"{len(self.feature_names)} feature names for {self.features.shape[1]} columns."
            )
        if not np.all(np.isfinite(self.features)):
            raise InputError("Features contain missing or non-finite values.")
        if self.family is not None:
            self.family = LossFamily(self.family)
            if self.family is LossFamily.BINARY_LOGISTIC and not np.all(np.isin(self.response, (0.0, 1.0))):
                raise InputError("Binary responses must be 0 or 1.")
            if self.family is LossFamily.MULTICLASS_SOFTMAX:
                y = self.response
                if np.any(y < 0) or np.any(y != np.round(y)):
                    raise InputError("Multiclass responses must be labels 0..K-1.")

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def num_classes(self):
        return int(self.response.max()) + 1

    def subset(self, rows):
        return Dataset(
            self.features[rows], self.response[rows], list(self.feature_names),
            self.family, self.target_name, dict(self.meta), list(self.dummy_columns),
        )

    def align(self, feature_names, dummy_columns=()):
        """
        Reorder columns to `feature_names`. Names listed in `dummy_columns`
        (one-hot dummies of the fitted data) that are absent here become zeros;
        any other absent column is an error.
        """
        if list(feature_names) == list(self.feature_names):
            return self
        frame = pd.DataFrame(self.features, columns=self.feature_names)
        dummies = set(dummy_columns)
        missing = [c for c in feature_names if c not in frame.columns and c not in dummies]
        if missing:
            raise InputError(f"Columns {missing} required by the model are missing.")
        frame = frame.reindex(columns=list(feature_names), fill_value=0.0)
        return Dataset(frame.to_numpy(dtype=float), self.response, list(feature_names),
                       self.family, self.target_name, dict(self.meta), list(dummy_columns))

    def to_frame(self):
        frame = pd.DataFrame(self.features, columns=self.feature_names)
        frame[self.target_name] = self.response
        return frame


def ingest_csv(path, target_column, loss_family=None, one_hot=False):
    """
    Read a UTF-8 CSV with a header row into a Dataset.

    Numeric columns are parsed as reals. With one_hot, string columns are
    expanded into 0/1 dummies, one per distinct value in first-appearance
    order, replacing the original column. Rows with missing cells are
    rejected with their line numbers.
    """
    df = _read(path)
    if target_column not in df.columns:
        raise InputError(
            f"Target column '{target_column}' not found; available columns: {list(df.columns)}."
        )

    _reject_missing(df)

    target = _numeric_column(df[target_column], target_column)
    frame, dummies = _predictor_frame(df.drop(columns=[target_column]), one_hot)
    logger.info("Ingested %s: %d rows, %d features", path, frame.shape[0], frame.shape[1])
    return Dataset(
        features=frame.to_numpy(dtype=float),
        response=target.to_numpy(dtype=float),
        feature_names=[str(c) for c in frame.columns],
        family=loss_family,
        target_name=target_column,
        dummy_columns=dummies,
    )


def ingest_features_csv(path, one_hot=False, drop=None):
    """Feature matrix of a CSV without a response; `drop` names a column to ignore if present."""
    df = _read(path)
    if drop is not None and drop in df.columns:
        df = df.drop(columns=[drop])
    _reject_missing(df)
    frame, _ = _predictor_frame(df, one_hot)
    return frame.to_numpy(dtype=float), [str(c) for c in frame.columns]


def _read(path):
    try:
        df = pd.read_csv(path, encoding="utf-8", skipinitialspace=True, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise InputError(f"{path} is empty.") from exc
    if df.empty:
        raise InputError(f"{path} has a header but no data rows.")
    return df


def _reject_missing(df):
    missing_rows = df.index[df.isna().any(axis=1)]
    if len(missing_rows) > 0:
        # header is line 1
        lines = [int(i) + 2 for i in missing_rows[:20]]
        raise InputError(f"{len(missing_rows)} rows with missing cells, at lines {lines}.")


def _predictor_frame(predictors, one_hot):
    """Numeric predictor frame and the names of the one-hot dummy columns in it."""
    blocks = []
    dummies = []
    for col in predictors.columns:
        series = predictors[col]
        if pd.api.types.is_numeric_dtype(series):
            blocks.append(series.astype(float).to_frame())
        elif one_hot:
            encoder = CustomOneHotEncoder()
            blocks.append(encoder.fit_transform(predictors, col))
            dummies.extend(encoder.dummy_names)
            logger.debug("One-hot expanded '%s' into %d columns", col, len(encoder.categories))
        else:
            blocks.append(_numeric_column(series, col).to_frame())

    if blocks:
        return pd.concat(blocks, axis=1), dummies
    return pd.DataFrame(index=predictors.index), dummies


def _numeric_column(series, name):
    parsed = pd.to_numeric(series, errors="coerce")
    bad = parsed.isna() & series.notna()
    if bad.any():
        line = int(series.index[bad][0]) + 2
        raise InputError(
            f"Column '{name}' has unparseable numeric value {series[bad].iloc[0]!r} at line {line}."
        )
    return parsed.astype(float)


def write_csv(dataset: Dataset, path):
    dataset.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %d rows to %s", dataset.n_rows, path)


def write_frame(frame: pd.DataFrame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def default_loss(dataset: Dataset, family, num_classes=None, gamma=10.0, sigma=1.0,
                 y_lower=None, y_upper=None) -> LossSpec:
    """
    LossSpec of `family` for this dataset. K defaults to the largest label
    plus one and the Tobit thresholds to the smallest and largest response.
    """
    family = LossFamily(family)
    if family is LossFamily.MULTICLASS_SOFTMAX:
        return LossSpec.multiclass(num_classes or dataset.num_classes)
    if family is LossFamily.GAMMA:
        return LossSpec.gamma_shape(gamma)
    if family is LossFamily.TOBIT:
        if y_lower is None:
            y_lower = float(dataset.response.min())
        if y_upper is None:
            y_upper = float(dataset.response.max())
        return LossSpec.tobit(y_lower, y_upper, sigma=sigma)
    return LossSpec(family)


def prediction_frame(loss: LossSpec, scores):
    """Raw scores and their link-inverted responses, one row per observation."""
    scores = np.asarray(scores, dtype=float)
    responses = responses_from_scores(loss, scores)
    family = loss.family
    if family is LossFamily.MULTICLASS_SOFTMAX:
        cols = {f"score_{k}": scores[:, k] for k in range(loss.num_outputs)}
        cols.update({f"prob_{k}": responses[:, k] for k in range(loss.num_outputs)})
        cols["label"] = np.argmax(responses, axis=1)
        return pd.DataFrame(cols)
    if family is LossFamily.MEAN_SCALE_GAUSSIAN:
        return pd.DataFrame({
            "score_mean": scores[:, 0], "score_logsd": scores[:, 1],
            "mean": responses[:, 0], "sd": responses[:, 1],
        })
    return pd.DataFrame({"score": scores[:, 0], "response": responses})
