import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, gammaln, log_ndtr, softmax

from config import SCORE_CLAMP
from exceptions import ConfigError, DomainError, InputError

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class LossFamily(str, Enum):
    SQUARED_ERROR = "squared"
    BINARY_LOGISTIC = "binary"
    MULTICLASS_SOFTMAX = "multiclass"
    POISSON = "poisson"
    GAMMA = "gamma"
    TOBIT = "tobit"
    MEAN_SCALE_GAUSSIAN = "mean-scale"

    @property
    def is_classification(self):
        return self in (LossFamily.BINARY_LOGISTIC, LossFamily.MULTICLASS_SOFTMAX)


@dataclass(frozen=True)
class LossSpec:
    """
    A loss family together with its fixed auxiliary parameters.

    num_outputs is the dimension d of the score vector: K for multiclass,
    2 for mean-scale regression (mean, log standard deviation), 1 otherwise.
    gamma is the known Gamma shape, sigma the latent standard deviation of the
    Tobit model and y_lower / y_upper its censoring thresholds.
    """

    family: LossFamily
    num_outputs: Optional[int] = None
    gamma: float = 10.0
    sigma: float = 1.0
    y_lower: Optional[float] = None
    y_upper: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", LossFamily(self.family))
        if self.num_outputs is None:
            if self.family is LossFamily.MULTICLASS_SOFTMAX:
                raise ConfigError("Multiclass loss needs num_outputs = K >= 2.")
            default = 2 if self.family is LossFamily.MEAN_SCALE_GAUSSIAN else 1
            object.__setattr__(self, "num_outputs", default)
        self.validate()

    def validate(self):
        d = self.num_outputs
        if self.family is LossFamily.MULTICLASS_SOFTMAX:
            if d < 2:
                raise ConfigError(f"Multiclass loss needs K >= 2 outputs, got {d}.")
        elif self.family is LossFamily.MEAN_SCALE_GAUSSIAN:
            if d != 2:
                raise ConfigError(f"Mean-scale loss has exactly 2 outputs, got {d}.")
        elif d != 1:
            raise ConfigError(f"{self.family.value} loss has a single output, got {d}.")

        if self.family is LossFamily.GAMMA and not self.gamma > 0:
            raise ConfigError(f"Gamma shape must be positive, got {self.gamma}.")
        if self.family is LossFamily.TOBIT:
            if not self.sigma > 0:
                raise ConfigError(f"Tobit sigma must be positive, got {self.sigma}.")
            if self.y_lower is None or self.y_upper is None:
                raise ConfigError("Tobit loss needs both y_lower and y_upper.")
            if not self.y_lower < self.y_upper:
                raise ConfigError(
                    f"Tobit thresholds must satisfy y_lower < y_upper, got "
                    f"{self.y_lower} and {self.y_upper}."
                )

    @classmethod
    def squared(cls):
        return cls(LossFamily.SQUARED_ERROR)

    @classmethod
    def binary(cls):
        return cls(LossFamily.BINARY_LOGISTIC)

    @classmethod
    def multiclass(cls, num_classes):
        return cls(LossFamily.MULTICLASS_SOFTMAX, num_outputs=num_classes)

    @classmethod
    def poisson(cls):
        return cls(LossFamily.POISSON)

    @classmethod
    def gamma_shape(cls, gamma=10.0):
        return cls(LossFamily.GAMMA, gamma=gamma)

    @classmethod
    def tobit(cls, y_lower, y_upper, sigma=1.0):
        return cls(LossFamily.TOBIT, sigma=sigma, y_lower=y_lower, y_upper=y_upper)

    @classmethod
    def mean_scale(cls):
        return cls(LossFamily.MEAN_SCALE_GAUSSIAN)

    def to_dict(self):
        return {
            "family": self.family.value,
            "num_outputs": int(self.num_outputs),
            "gamma": float(self.gamma),
            "sigma": float(self.sigma),
            "y_lower": None if self.y_lower is None else float(self.y_lower),
            "y_upper": None if self.y_upper is None else float(self.y_upper),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            family=LossFamily(payload["family"]),
            num_outputs=payload["num_outputs"],
            gamma=payload.get("gamma", 10.0),
            sigma=payload.get("sigma", 1.0),
            y_lower=payload.get("y_lower"),
            y_upper=payload.get("y_upper"),
        )


@dataclass
class LossTriplet:
    loss: float
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(1))
    hessian: np.ndarray = field(default_factory=lambda: np.zeros(1))


def check_responses(spec: LossSpec, y):
    """Raise DomainError unless every response is valid for the loss family."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InputError(f"Responses must be one-dimensional, got shape {y.shape}.")
    if not np.all(np.isfinite(y)):
        raise DomainError("Responses contain non-finite values.")

    family = spec.family
    bad = None
    if family is LossFamily.BINARY_LOGISTIC:
        bad = ~np.isin(y, (0.0, 1.0))
        expected = "0 or 1"
    elif family is LossFamily.MULTICLASS_SOFTMAX:
        bad = (y != np.round(y)) | (y < 0) | (y > spec.num_outputs - 1)
        expected = f"an integer label in 0..{spec.num_outputs - 1}"
    elif family is LossFamily.POISSON:
        bad = (y != np.round(y)) | (y < 0)
        expected = "a nonnegative integer count"
    elif family is LossFamily.GAMMA:
        bad = y <= 0
        expected = "strictly positive"
    elif family is LossFamily.TOBIT:
        bad = (y < spec.y_lower) | (y > spec.y_upper)
        expected = f"inside [{spec.y_lower}, {spec.y_upper}]"

    if bad is not None and np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise DomainError(
            f"Response {y[idx]!r} at row {idx} is invalid for the "
            f"{family.value} loss; expected {expected}."
        )
    return y


def _as_score_matrix(spec: LossSpec, scores, n):
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1 and spec.num_outputs == 1:
        scores = scores[:, None]
    if scores.shape != (n, spec.num_outputs):
        raise InputError(
            f"Scores must have shape ({n}, {spec.num_outputs}), got {scores.shape}."
        )
    if not np.all(np.isfinite(scores)):
        raise InputError("Scores contain non-finite values.")
    return scores


def loss_terms(spec: LossSpec, y, scores, check=True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-observation loss, gradient and diagonal Hessian for a whole sample.

    Parameters:
        spec (LossSpec): loss family and its parameters.
        y (array n): responses.
        scores (array n x d): current scores F; a flat array is accepted when d = 1.
        check (bool): validate responses and scores first.

    Returns:
        (loss[n], gradient[n, d], hessian[n, d])
    """
    y = np.asarray(y, dtype=float)
    if check:
        y = check_responses(spec, y)
    scores = _as_score_matrix(spec, scores, y.shape[0])

    family = spec.family
    if family is LossFamily.SQUARED_ERROR:
        return _squared(y, scores[:, 0])
    if family is LossFamily.BINARY_LOGISTIC:
        return _binary(y, scores[:, 0])
    if family is LossFamily.MULTICLASS_SOFTMAX:
        return _multiclass(y, scores)
    if family is LossFamily.POISSON:
        return _poisson(y, scores[:, 0])
    if family is LossFamily.GAMMA:
        return _gamma(y, scores[:, 0], spec.gamma)
    if family is LossFamily.TOBIT:
        return _tobit(y, scores[:, 0], spec.sigma, spec.y_lower, spec.y_upper)
    if family is LossFamily.MEAN_SCALE_GAUSSIAN:
        return _mean_scale(y, scores)
    raise ConfigError(f"Unknown loss family {family!r}.")


def per_row_loss(spec: LossSpec, y, scores, check=True):
    return loss_terms(spec, y, scores, check=check)[0]


def eval_loss(spec: LossSpec, y, scores) -> LossTriplet:
    """Loss, gradient and diagonal Hessian for a single observation."""
    scores = np.atleast_1d(np.asarray(scores, dtype=float))
    loss, grad, hess = loss_terms(spec, np.array([y], dtype=float), scores[None, :])
    return LossTriplet(loss=float(loss[0]), gradient=grad[0], hessian=hess[0])


def responses_from_scores(spec: LossSpec, scores):
    """
    Vectorised link inversion. Returns an array of length n for scalar
    families and an n x d array for multiclass (probabilities) and
    mean-scale (mean, standard deviation).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None] if spec.num_outputs == 1 else scores[None, :]
    scores = _as_score_matrix(spec, scores, scores.shape[0])

    family = spec.family
    if family is LossFamily.BINARY_LOGISTIC:
        return expit(scores[:, 0])
    if family is LossFamily.MULTICLASS_SOFTMAX:
        return softmax(np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP), axis=1)
    if family in (LossFamily.POISSON, LossFamily.GAMMA):
        return np.exp(np.clip(scores[:, 0], -SCORE_CLAMP, SCORE_CLAMP))
    if family is LossFamily.MEAN_SCALE_GAUSSIAN:
        sd = np.exp(np.clip(scores[:, 1], -SCORE_CLAMP, SCORE_CLAMP))
        return np.column_stack([scores[:, 0], sd])
    return scores[:, 0].copy()


def score_to_response(spec: LossSpec, scores):
    """Link inversion for one observation: a float or a length-d vector."""
    scores = np.atleast_1d(np.asarray(scores, dtype=float))
    out = responses_from_scores(spec, scores[None, :])
    return float(out[0]) if out.ndim == 1 else out[0]


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def _squared(y, f):
    resid = f - y
    return 0.5 * resid * resid, resid[:, None], np.ones((y.shape[0], 1))


def _binary(y, f):
    f = np.clip(f, -SCORE_CLAMP, SCORE_CLAMP)
    sign = 2.0 * y - 1.0
    loss = np.logaddexp(0.0, -sign * f)
    p = expit(f)
    q = expit(-f)
    grad = np.where(y == 1.0, -q, p)
    hess = p * q
    return loss, grad[:, None], hess[:, None]


def _multiclass(y, f):
    n, k = f.shape
    rows = np.arange(n)
    labels = y.astype(int)

    f = np.clip(f, -SCORE_CLAMP, SCORE_CLAMP)
    top = np.argmax(f, axis=1)
    shifted = f - f[rows, top][:, None]
    e = np.exp(shifted)
    total = e.sum(axis=1)
    # sum over the non-maximal classes, kept separate so tiny losses survive log1p
    others = e.copy()
    others[rows, top] = 0.0
    rest = others.sum(axis=1)

    loss = np.log1p(rest) - shifted[rows, labels]

    p = e / total[:, None]
    excluded = total[:, None] - e
    excluded[rows, top] = rest
    one_minus_p = excluded / total[:, None]

    grad = p.copy()
    grad[rows, labels] = -one_minus_p[rows, labels]
    hess = p * one_minus_p
    return loss, grad, hess


def _poisson(y, f):
    f = np.clip(f, -SCORE_CLAMP, SCORE_CLAMP)
    mu = np.exp(f)
    loss = -y * f + mu
    return loss, (mu - y)[:, None], mu[:, None]


def _gamma(y, f, shape):
    f = np.clip(f, -SCORE_CLAMP, SCORE_CLAMP)
    log_y = np.log(y)
    # y * exp(-f), capped so large y at f = -SCORE_CLAMP stays finite
    scaled = np.exp(np.minimum(log_y - f, SCORE_CLAMP))
    const = -(shape - 1.0) * log_y - shape * math.log(shape) + gammaln(shape)
    loss = shape * (f + scaled) + const
    grad = shape * (1.0 - scaled)
    hess = shape * scaled
    return loss, grad[:, None], hess[:, None]


def _mills(z):
    """phi(z) / Phi(z), evaluated in log space."""
    return np.exp(-0.5 * z * z - _HALF_LOG_2PI - log_ndtr(z))


def _tobit(y, f, sigma, y_lower, y_upper):
    lower = y == y_lower
    upper = y == y_upper
    inner = ~(lower | upper)

    z_l = (y_lower - f) / sigma
    z_u = (y_upper - f) / sigma
    r_l = _mills(z_l)
    # phi(z_u) / (1 - Phi(z_u)) = phi(-z_u) / Phi(-z_u)
    r_u = _mills(-z_u)

    resid = y - f
    inv_var = 1.0 / (sigma * sigma)

    loss = np.select(
        [lower, upper],
        [-log_ndtr(z_l), -log_ndtr(-z_u)],
        default=0.5 * resid * resid * inv_var + math.log(sigma) + _HALF_LOG_2PI,
    )
    grad = np.select(
        [lower, upper],
        [r_l / sigma, -r_u / sigma],
        default=-resid * inv_var,
    )
    hess = np.select(
        [lower, upper],
        [r_l * (z_l + r_l) * inv_var, r_u * (r_u - z_u) * inv_var],
        default=np.full_like(f, inv_var),
    )
    # z + r >= 0 analytically; cancellation can leave a tiny negative
    hess = np.maximum(hess, 0.0)
    hess = np.where(inner, inv_var, hess)
    return loss, grad[:, None], hess[:, None]


def _mean_scale(y, f):
    mean = f[:, 0]
    log_sd = np.clip(f[:, 1], -0.5 * SCORE_CLAMP, 0.5 * SCORE_CLAMP)
    resid = y - mean
    inv_var = np.exp(-2.0 * log_sd)
    sq = resid * resid * inv_var

    loss = 0.5 * sq + log_sd + _HALF_LOG_2PI
    grad = np.column_stack([-resid * inv_var, 1.0 - sq])
    hess = np.column_stack([inv_var, 2.0 * sq])
    return loss, grad, hess
