"""
Seeded simulators for the boosting comparison study.

All randomness comes from numpy's PCG64 bit generator seeded with the
SimSpec seed, so datasets are reproducible across platforms.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit
from scipy.stats import chi2

from dataset import Dataset
from exceptions import ConfigError, DomainError
from losses import LossFamily, LossSpec

logger = logging.getLogger(__name__)

_MAX_REDRAWS = 100


class MeanFunction(str, Enum):
    FRIEDMAN1 = "f1"
    FRIEDMAN3 = "f3"
    RIDGEWAY = "r"


class ResponseKind(str, Enum):
    POISSON = "poisson"
    GAMMA = "gamma"
    TOBIT = "tobit"
    MEAN_SCALE = "msr"
    FHT_BINARY = "bin_classif_fht"
    FHT_MULTICLASS = "multi_classif_fht"


FEATURE_WIDTH = {
    MeanFunction.FRIEDMAN1: 10,
    MeanFunction.FRIEDMAN3: 4,
    MeanFunction.RIDGEWAY: 2,
}

FHT_WIDTH = 10


@dataclass(frozen=True)
class SimSpec:
    """
    What to simulate. FHT responses carry their own score function and ignore
    mean_fn. literal_fht_sign switches the binary FHT score to the reading in
    which every sign term is -1 instead of alternating (-1)^l.
    """

    mean_fn: MeanFunction = MeanFunction.FRIEDMAN1
    response: ResponseKind = ResponseKind.POISSON
    n: int = 1000
    seed: int = 0
    gamma: float = 10.0
    sigma: float = 1.0
    num_classes: int = 5
    literal_fht_sign: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mean_fn", MeanFunction(self.mean_fn))
        object.__setattr__(self, "response", ResponseKind(self.response))
        if self.n < 1:
            raise ConfigError(f"Sample size must be positive, got {self.n}.")
        if not self.gamma > 0 or not self.sigma > 0:
            raise ConfigError("gamma and sigma must be positive.")
        if self.response is ResponseKind.FHT_MULTICLASS and self.n < self.num_classes:
            raise ConfigError(f"Need n >= K = {self.num_classes}, got {self.n}.")

    @property
    def name(self):
        if self.response in (ResponseKind.FHT_BINARY, ResponseKind.FHT_MULTICLASS):
            return self.response.value
        return f"{self.response.value}_{self.mean_fn.value}"

    @property
    def n_features(self):
        if self.response in (ResponseKind.FHT_BINARY, ResponseKind.FHT_MULTICLASS):
            return FHT_WIDTH
        p = FEATURE_WIDTH[self.mean_fn]
        return 2 * p if self.response is ResponseKind.MEAN_SCALE else p


def _rows(x, width):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != width:
        raise DomainError(f"Expected {width} coordinates, got {x.shape[1]}.")
    return x, single


def _check_range(values, lo, hi, label, lo_open=False):
    below = values <= lo if lo_open else values < lo
    if np.any(below | (values > hi)):
        bracket = "(" if lo_open else "["
        raise DomainError(f"{label} must lie in {bracket}{lo}, {hi}].")


def friedman1(x):
    """10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 on [0, 1]^10."""
    x, single = _rows(x, 10)
    _check_range(x, 0.0, 1.0, "friedman1 inputs")
    out = (
        10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20.0 * (x[:, 2] - 0.5) ** 2
        + 10.0 * x[:, 3]
        + 5.0 * x[:, 4]
    )
    return float(out[0]) if single else out


def friedman3(x):
    """5 atan((x2 x3 - 1 - 1 / (x2 x4)) / x1) + 0.2."""
    x, single = _rows(x, 4)
    _check_range(x[:, 0], 0.0, 100.0, "X1", lo_open=True)
    _check_range(x[:, 1], 40.0 * np.pi, 560.0 * np.pi, "X2")
    _check_range(x[:, 2], 0.0, 1.0, "X3")
    _check_range(x[:, 3], 1.0, 11.0, "X4")
    x1, x2, x3, x4 = x.T
    out = 5.0 * np.arctan((x2 * x3 - 1.0 - 1.0 / (x2 * x4)) / x1) + 0.2
    return float(out[0]) if single else out


def ridgeway(x):
    """exp(2 sin(3 x1 + 5 x1^2) - 2 sin(3 (x2 + 0.1) + 5 (x2 + 0.1)^2)) on [0, 1]^2."""
    x, single = _rows(x, 2)
    _check_range(x, 0.0, 1.0, "ridgeway inputs")
    x1 = x[:, 0]
    x2 = x[:, 1] + 0.1
    out = np.exp(2.0 * np.sin(3.0 * x1 + 5.0 * x1 ** 2) - 2.0 * np.sin(3.0 * x2 + 5.0 * x2 ** 2))
    return float(out[0]) if single else out


MEAN_FUNCTIONS = {
    MeanFunction.FRIEDMAN1: friedman1,
    MeanFunction.FRIEDMAN3: friedman3,
    MeanFunction.RIDGEWAY: ridgeway,
}


def sample_features(mean_fn, n, rng):
    mean_fn = MeanFunction(mean_fn)
    if mean_fn is MeanFunction.FRIEDMAN3:
        return np.column_stack([
            100.0 - rng.uniform(0.0, 100.0, n),  # (0, 100]
            rng.uniform(40.0 * np.pi, 560.0 * np.pi, n),
            rng.uniform(0.0, 1.0, n),
            rng.uniform(1.0, 11.0, n),
        ])
    return rng.uniform(0.0, 1.0, (n, FEATURE_WIDTH[mean_fn]))


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def fht_signs(literal=False):
    if literal:
        return -np.ones(6)
    return np.array([(-1.0) ** l for l in range(1, 7)])


def fht_binary_score(x, literal=False):
    """F(x) = 10 sum_{j<=6} x_j (1 + sum_{l<=6} s_l x_l), s_l = (-1)^l."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    head = x[:, :6]
    return 10.0 * head.sum(axis=1) * (1.0 + head @ fht_signs(literal))


def fht_binary(n, seed, literal_sign=False):
    rng = make_rng(seed)
    x = rng.standard_normal((n, FHT_WIDTH))
    p = expit(fht_binary_score(x, literal_sign))
    y = (rng.random(n) < p).astype(float)
    return Dataset(x, y, family=LossFamily.BINARY_LOGISTIC,
                   meta={"simulation": ResponseKind.FHT_BINARY.value, "seed": seed})


def fht_thresholds(num_classes=5, df=FHT_WIDTH):
    """chi-square quantiles t_0 = 0 < t_1 < ... < t_K = inf at k / K."""
    inner = chi2.ppf(np.arange(1, num_classes) / num_classes, df)
    return np.concatenate([[0.0], inner, [np.inf]])


def fht_multiclass(n, seed, num_classes=5):
    if n < num_classes:
        raise ConfigError(f"Need n >= K = {num_classes}, got {n}.")
    rng = make_rng(seed)
    x = rng.standard_normal((n, FHT_WIDTH))
    r2 = np.einsum("ij,ij->i", x, x)
    y = np.searchsorted(fht_thresholds(num_classes)[1:-1], r2, side="right").astype(float)
    return Dataset(x, y, family=LossFamily.MULTICLASS_SOFTMAX,
                   meta={"simulation": ResponseKind.FHT_MULTICLASS.value, "seed": seed,
                         "num_classes": num_classes})


def _rescale_log_sd(raw):
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        return -1.0 + 2.0 * (raw - lo) / (hi - lo)
    return np.zeros_like(raw)


def sample_response(spec: SimSpec, values, features=None, rng=None):
    """
    Draw responses given the simulated function values.

    values is F(x) of length n for Poisson, Gamma and Tobit (the mean, resp.
    the latent mean) and an n x 2 array (mean function, raw log-sd function)
    for mean-scale regression; the log-sd column is mapped affinely onto
    [-1, 1] over its range in the sample.
    """
    if rng is None:
        rng = make_rng(spec.seed)
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if features is None:
        features = np.empty((n, 0))
    meta = {"simulation": spec.name, "seed": spec.seed}

    kind = spec.response
    if kind in (ResponseKind.POISSON, ResponseKind.GAMMA):
        if np.any(values <= 0):
            raise DomainError(
                f"{kind.value} simulation needs a positive mean, got min {values.min():.6g}."
            )
        if kind is ResponseKind.POISSON:
            y = rng.poisson(values).astype(float)
            family = LossFamily.POISSON
        else:
            y = rng.gamma(shape=spec.gamma, scale=values / spec.gamma)
            family = LossFamily.GAMMA
            meta["gamma"] = spec.gamma
    elif kind is ResponseKind.TOBIT:
        latent = values + spec.sigma * rng.standard_normal(n)
        y_lower, y_upper = np.quantile(latent, [1.0 / 3.0, 2.0 / 3.0])
        y = np.clip(latent, y_lower, y_upper)
        family = LossFamily.TOBIT
        meta.update(sigma=spec.sigma, y_lower=float(y_lower), y_upper=float(y_upper))
    elif kind is ResponseKind.MEAN_SCALE:
        if values.ndim != 2 or values.shape[1] != 2:
            raise DomainError("Mean-scale simulation needs (mean, log-sd) value pairs.")
        log_sd = _rescale_log_sd(values[:, 1])
        y = values[:, 0] + np.exp(log_sd) * rng.standard_normal(n)
        family = LossFamily.MEAN_SCALE_GAUSSIAN
    else:
        raise ConfigError(f"{kind.value} responses are generated by their own simulator.")

    return Dataset(features, y, family=family, meta=meta)


def _positive_mean_features(spec, rng):
    """Features whose mean function is positive; offending rows are redrawn."""
    fn = MEAN_FUNCTIONS[spec.mean_fn]
    x = sample_features(spec.mean_fn, spec.n, rng)
    f = fn(x)
    for _ in range(_MAX_REDRAWS):
        bad = f <= 0
        if not np.any(bad):
            return x, f
        x[bad] = sample_features(spec.mean_fn, int(bad.sum()), rng)
        f[bad] = fn(x[bad])
    raise DomainError(f"Could not draw positive means for {spec.name}.")


def simulate(spec: SimSpec) -> Dataset:
    """Generate the dataset described by spec (deterministic in spec.seed)."""
    kind = spec.response
    if kind is ResponseKind.FHT_BINARY:
        return fht_binary(spec.n, spec.seed, spec.literal_fht_sign)
    if kind is ResponseKind.FHT_MULTICLASS:
        return fht_multiclass(spec.n, spec.seed, spec.num_classes)

    rng = make_rng(spec.seed)
    fn = MEAN_FUNCTIONS[spec.mean_fn]
    if kind is ResponseKind.MEAN_SCALE:
        x_mean = sample_features(spec.mean_fn, spec.n, rng)
        x_scale = sample_features(spec.mean_fn, spec.n, rng)
        features = np.hstack([x_mean, x_scale])
        values = np.column_stack([fn(x_mean), fn(x_scale)])
    elif kind in (ResponseKind.POISSON, ResponseKind.GAMMA):
        features, values = _positive_mean_features(spec, rng)
    else:
        features = sample_features(spec.mean_fn, spec.n, rng)
        values = fn(features)

    dataset = sample_response(spec, values, features, rng)
    logger.info("Simulated %s: n=%d, p=%d, seed=%d", spec.name, spec.n, dataset.n_features, spec.seed)
    return dataset


SIM_DATASETS = {
    f"{kind.value}_{fn.value}": (kind, fn)
    for kind in (ResponseKind.POISSON, ResponseKind.GAMMA, ResponseKind.TOBIT, ResponseKind.MEAN_SCALE)
    for fn in MeanFunction
}
SIM_DATASETS[ResponseKind.FHT_BINARY.value] = (ResponseKind.FHT_BINARY, MeanFunction.FRIEDMAN1)
SIM_DATASETS[ResponseKind.FHT_MULTICLASS.value] = (ResponseKind.FHT_MULTICLASS, MeanFunction.FRIEDMAN1)


def named_simspec(name, n, seed, **kwargs):
    """SimSpec for a named dataset such as 'poisson_f1', 'msr_r' or 'multi_classif_fht'."""
    if name not in SIM_DATASETS:
        raise ConfigError(f"Unknown simulated dataset '{name}'; choose from {sorted(SIM_DATASETS)}.")
    kind, fn = SIM_DATASETS[name]
    return SimSpec(mean_fn=fn, response=kind, n=n, seed=seed, **kwargs)


def loss_for(dataset: Dataset, num_classes=None) -> LossSpec:
    """The loss a simulated dataset is meant to be fit with."""
    family = dataset.family
    meta = dataset.meta
    if family is LossFamily.TOBIT:
        return LossSpec.tobit(meta["y_lower"], meta["y_upper"], sigma=meta.get("sigma", 1.0))
    if family is LossFamily.GAMMA:
        return LossSpec.gamma_shape(meta.get("gamma", 10.0))
    if family is LossFamily.MULTICLASS_SOFTMAX:
        k = num_classes or meta.get("num_classes") or dataset.num_classes
        return LossSpec.multiclass(k)
    if family is None:
        raise ConfigError("Dataset carries no loss family.")
    return LossSpec(family)

