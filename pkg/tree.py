import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from exceptions import ConfigError, InputError

logger = logging.getLogger(__name__)

# A split must reduce the node's weighted SSE by more than this fraction of it.
_MIN_RELATIVE_GAIN = 1e-12

# Bisection bracket (in ulps of n) and step limit for the exact-sum correction.
_SETTLE_PAD_ULPS = 64
_MAX_SETTLE_STEPS = 128


class LeafConstraint(str, Enum):
    RAW_COUNT = "count"
    EQUIVALENT_WEIGHTED = "equivalent"
    RAW_HESSIAN_SUM = "hessian-sum"


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 5
    leaf_constraint: LeafConstraint = LeafConstraint.RAW_COUNT
    min_per_leaf: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "leaf_constraint", LeafConstraint(self.leaf_constraint))
        self.validate()

    def validate(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ConfigError(f"max_depth must be a positive integer, got {self.max_depth}.")
        if not self.min_per_leaf >= 0:
            raise ConfigError(f"min_per_leaf must be nonnegative, got {self.min_per_leaf}.")

    def to_dict(self):
        return {
            "max_depth": int(self.max_depth),
            "leaf_constraint": self.leaf_constraint.value,
            "min_per_leaf": float(self.min_per_leaf),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            max_depth=payload["max_depth"],
            leaf_constraint=LeafConstraint(payload["leaf_constraint"]),
            min_per_leaf=payload["min_per_leaf"],
        )


@dataclass(frozen=True)
class RegressionTree:
    """
    Binary axis-aligned regression tree stored as flat node arrays.

    Node 0 is the root and nodes are numbered in depth-first preorder. A node
    is a leaf iff feature[node] == -1. Rows go to the left child iff
    x[feature] <= threshold. value holds the (weighted mean) node value; for
    leaves this is the prediction. gain holds the SSE reduction of the split
    chosen at an internal node and 0 at leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_features: int

    @property
    def n_nodes(self):
        return int(self.feature.shape[0])

    @property
    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    @property
    def n_leaves(self):
        return int(self.leaves.shape[0])

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, features):
        """Leaf node id for every row."""
        features = _check_width(features, self.n_features)
        node = np.zeros(features.shape[0], dtype=np.intp)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = features[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return node

    def predict(self, features):
        return self.value[self.apply(features)]

    def with_leaf_values(self, leaf_values):
        """Copy of the tree whose leaves carry the given {node id: value} mapping."""
        value = self.value.copy()
        for node, leaf_val in leaf_values.items():
            if self.feature[node] >= 0:
                raise InputError(f"Node {node} is not a leaf.")
            value[node] = leaf_val
        return RegressionTree(
            self.feature, self.threshold, self.left, self.right, value, self.gain, self.n_features
        )

    def scaled(self, factor):
        return RegressionTree(
            self.feature, self.threshold, self.left, self.right,
            self.value * factor, self.gain, self.n_features,
        )

    def to_dict(self):
        return {
            "n_features": int(self.n_features),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.intp),
            threshold=np.asarray(payload["threshold"], dtype=float),
            left=np.asarray(payload["left"], dtype=np.intp),
            right=np.asarray(payload["right"], dtype=np.intp),
            value=np.asarray(payload["value"], dtype=float),
            gain=np.asarray(payload.get("gain", [0.0] * len(payload["feature"])), dtype=float),
            n_features=int(payload["n_features"]),
        )


def _check_width(features, n_features):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[None, :]
    if features.ndim != 2 or features.shape[1] != n_features:
        raise InputError(
            f"Feature matrix has width {features.shape[-1]}, tree was fit on {n_features}."
        )
    return features


def normalize_weights(hessians):
    """
    Rescale Hessians so they sum to the number of observations,
    w_i = n * h_i / sum(h). Constant Hessians map to exactly one. The
    rounding residual is moved onto the largest weight so that w.sum()
    equals n exactly.
    """
    h = np.asarray(hessians, dtype=float)
    n = h.shape[0]
    total = h.sum()
    if not total > 0:
        raise InputError("Cannot normalize weights that sum to zero.")
    if np.all(h == h[0]):
        return np.ones(n)
    w = n * h / total
    k = int(np.argmax(w))
    w[k] += n - math.fsum(w)
    if w.sum() != n:
        _settle_sum(w, k, n)
    return w


def _settle_sum(w, k, n):
    """Bisect w[k] in place until the floating-point sum of w equals n."""
    pad = _SETTLE_PAD_ULPS * np.spacing(float(n))
    lo, hi = w[k] - pad, w[k] + pad
    for _ in range(_MAX_SETTLE_STEPS):
        w[k] = lo + 0.5 * (hi - lo)
        total = w.sum()
        if total == n:
            return
        if total < n:
            lo = w[k]
        else:
            hi = w[k]
    logger.debug("Normalized weights sum to %.17g instead of %d", w.sum(), n)


def leaf_value(targets, weights):
    """Weighted mean sum(w * t) / sum(w)."""
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise InputError("Leaf has zero total weight.")
    return float(np.dot(weights, targets) / total)


def constraint_satisfied(config: TreeConfig, leaf_weights, leaf_count):
    """
    Whether one leaf meets the minimum-size constraint S. leaf_weights are the
    constraint weights of the leaf's observations: normalized Hessians for
    EquivalentWeighted, raw Hessians for RawHessianSum (ignored for RawCount).
    """
    if config.leaf_constraint is LeafConstraint.RAW_COUNT:
        return leaf_count >= config.min_per_leaf
    return float(np.sum(leaf_weights)) >= config.min_per_leaf


def constraint_weights(config: TreeConfig, weights):
    if config.leaf_constraint is LeafConstraint.RAW_COUNT:
        return np.ones_like(weights)
    if config.leaf_constraint is LeafConstraint.EQUIVALENT_WEIGHTED:
        return normalize_weights(weights)
    return weights


def fit_tree(features, targets, weights, config: TreeConfig):
    """
    Fit a CART regression tree by exact greedy weighted least squares.

    At each node every feature is sorted and every midpoint between
    consecutive distinct values is scored by the reduction in weighted SSE.
    The best split is taken (lowest feature index, then lowest threshold on
    ties) unless the node is at max_depth, no split reduces the SSE, or every
    split leaves a child violating the leaf constraint.

    Parameters:
        features (array n x p): predictors.
        targets (array n): regression targets (pseudo-targets when boosting).
        weights (array n): nonnegative observation weights, at least one positive.
        config (TreeConfig): depth and leaf-constraint settings.

    Returns:
        RegressionTree
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)

    if features.ndim != 2 or features.shape[0] == 0:
        raise InputError(f"Need a nonempty n x p feature matrix, got shape {features.shape}.")
    n = features.shape[0]
    if targets.shape != (n,) or weights.shape != (n,):
        raise InputError(
            f"targets and weights must have length {n}, got {targets.shape} and {weights.shape}."
        )
    if not np.all(np.isfinite(targets)):
        raise InputError("Targets contain non-finite values.")
    if not np.all(np.isfinite(features)):
        raise InputError("Features contain missing or non-finite values.")
    if np.any(weights < 0) or not weights.sum() > 0:
        raise InputError("Weights must be nonnegative with a positive sum.")

    builder = _TreeBuilder(features, targets, weights, constraint_weights(config, weights), config)
    builder.grow(np.arange(n), 0)
    tree = builder.finish()
    if tree.n_nodes == 1:
        logger.debug("No admissible root split (constraint %s, S=%g); single-leaf tree",
                     config.leaf_constraint.value, config.min_per_leaf)
    else:
        logger.debug("Fitted tree with %d leaves, depth %d", tree.n_leaves, tree.depth())
    return tree


def predict_tree(tree: RegressionTree, features):
    return tree.predict(features)


class _TreeBuilder:
    def __init__(self, features, targets, weights, cweights, config):
        self.features = features
        self.targets = targets
        self.weights = weights
        self.cweights = cweights
        self.config = config
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.gain = []

    def grow(self, idx, depth):
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(leaf_value(self.targets[idx], self.weights[idx]))
        self.gain.append(0.0)

        if depth >= self.config.max_depth or idx.shape[0] < 2:
            return node
        split = self.best_split(idx)
        if split is None:
            return node

        feat, thr, gain = split
        goes_left = self.features[idx, feat] <= thr
        self.feature[node] = feat
        self.threshold[node] = thr
        self.gain[node] = gain
        self.left[node] = self.grow(idx[goes_left], depth + 1)
        self.right[node] = self.grow(idx[~goes_left], depth + 1)
        return node

    def best_split(self, idx):
        t = self.targets[idx]
        w = self.weights[idx]
        c = self.cweights[idx]
        total_w = w.sum()
        centered = t - np.dot(w, t) / total_w
        parent_sse = float(np.dot(w, centered * centered))
        if not parent_sse > 0:
            return None

        wt = w * centered
        total_wt = wt.sum()
        parent_term = total_wt * total_wt / total_w
        m = idx.shape[0]
        s = self.config.min_per_leaf
        by_count = self.config.leaf_constraint is LeafConstraint.RAW_COUNT

        best = None
        # gains within tol of the incumbent count as ties, keeping the earlier feature
        tol = _MIN_RELATIVE_GAIN * parent_sse
        best_gain = tol
        for j in range(self.features.shape[1]):
            xj = self.features[idx, j]
            order = np.argsort(xj, kind="mergesort")
            xs = xj[order]
            distinct = xs[:-1] < xs[1:]
            if not np.any(distinct):
                continue

            ws = w[order]
            wts = wt[order]
            w_left = np.cumsum(ws)[:-1]
            w_right = np.cumsum(ws[::-1])[::-1][1:]
            t_left = np.cumsum(wts)[:-1]
            t_right = np.cumsum(wts[::-1])[::-1][1:]

            if by_count:
                c_left = np.arange(1, m, dtype=float)
                c_right = m - c_left
            else:
                cs = c[order]
                c_left = np.cumsum(cs)[:-1]
                c_right = np.cumsum(cs[::-1])[::-1][1:]

            valid = distinct & (w_left > 0) & (w_right > 0) & (c_left >= s) & (c_right >= s)
            if not np.any(valid):
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = t_left * t_left / w_left + t_right * t_right / w_right - parent_term
            gains = np.where(valid, gains, -np.inf)

            i = int(np.argmax(gains))
            if gains[i] > best_gain + (tol if best is not None else 0.0):
                best_gain = float(gains[i])
                best = (j, _midpoint(xs[i], xs[i + 1]), best_gain)
        return best

    def finish(self):
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.intp),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.intp),
            right=np.asarray(self.right, dtype=np.intp),
            value=np.asarray(self.value, dtype=float),
            gain=np.asarray(self.gain, dtype=float),
            n_features=self.features.shape[1],
        )


def _midpoint(lo, hi):
    mid = 0.5 * (lo + hi)
    # adjacent floats can round the midpoint up onto hi
    if not mid < hi:
        mid = lo
    return float(mid)
