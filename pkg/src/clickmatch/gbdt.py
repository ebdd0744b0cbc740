"""Stage-1 pairwise scorer: gradient-boosted regression trees with logistic
loss, built from first principles.

Each boosting round fits one depth-limited tree to the logistic-loss
residuals (y - p) with exact greedy splits chosen by variance reduction on
sorted feature values; leaves take the Newton step (sum of residuals over sum
of hessians) scaled by the learning rate. Training logloss is recorded per
round. No histograms, no second-order regularization penalties: exactness
over throughput at desk scale.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Mapping, NamedTuple, Sequence

import numpy as np

from .artifacts import read_artifact, write_artifact
from .features import FeatureSchema
from .pairs import CandidatePair

# Newton steps are clamped (pre-shrinkage) so near-pure leaves with vanishing
# hessians cannot blow up the margin.
MAX_LEAF_STEP = 10.0


@dataclass
class LabeledPair:
    pair: CandidatePair
    features: np.ndarray
    label: int
    from_candidates: bool = True  # False: truth pair missed by KNN, kept as a positive anyway


class ScoredPair(NamedTuple):
    pair: CandidatePair
    score: float


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 10
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if not (0 < self.subsample <= 1):
            raise ValueError(f"subsample must be in (0, 1], got {self.subsample}")


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf, value holds the shrunk leaf score."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _logloss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


class _TreeBuilder:
    def __init__(self, X: np.ndarray, residuals: np.ndarray, hessians: np.ndarray, params: GbdtParams):
        self.X = X
        self.r = residuals
        self.h = hessians
        self.params = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gain: list[float] = []

    def _leaf_value(self, rows: np.ndarray) -> float:
        step = self.r[rows].sum() / (self.h[rows].sum() + 1e-16)
        step = min(max(step, -MAX_LEAF_STEP), MAX_LEAF_STEP)
        return step * self.params.learning_rate

    def _best_split(self, rows: np.ndarray) -> tuple[int, float, float] | None:
        n = rows.shape[0]
        min_leaf = self.params.min_leaf
        if n < 2 * min_leaf:
            return None
        r = self.r[rows]
        total = r.sum()
        best: tuple[int, float, float] | None = None
        best_gain = 1e-12
        left_sizes = np.arange(1, n, dtype=np.float64)
        right_sizes = n - left_sizes
        size_ok = (left_sizes >= min_leaf) & (right_sizes >= min_leaf)
        for j in range(self.X.shape[1]):
            x = self.X[rows, j]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            left_sums = np.cumsum(r[order])[:-1]
            valid = size_ok & (xs[1:] != xs[:-1])
            if not valid.any():
                continue
            gains = np.where(
                valid,
                left_sums**2 / left_sizes
                + (total - left_sums) ** 2 / right_sizes
                - total**2 / n,
                -np.inf,
            )
            i = int(np.argmax(gains))
            if gains[i] > best_gain:
                best_gain = float(gains[i])
                threshold = float((xs[i] + xs[i + 1]) / 2.0)
                if threshold >= xs[i + 1]:  # midpoint rounded up between adjacent floats
                    threshold = float(xs[i])
                best = (j, threshold, best_gain)
        return best

    def build(self, rows: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(0.0)
        split = self._best_split(rows) if depth < self.params.max_depth else None
        if split is None:
            self.value[node] = self._leaf_value(rows)
            return node
        j, threshold, gain = split
        mask = self.X[rows, j] <= threshold
        self.feature[node] = j
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = self.build(rows[mask], depth + 1)
        self.right[node] = self.build(rows[~mask], depth + 1)
        return node

    def tree(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int32),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int32),
            np.array(self.right, dtype=np.int32),
            np.array(self.value, dtype=np.float64),
            np.array(self.gain, dtype=np.float64),
        )


@dataclass
class PairClassifier:
    params: GbdtParams
    schema: FeatureSchema
    base_score: float
    trees: list[Tree] = field(default_factory=list)
    train_logloss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        margin = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += tree.predict(X)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise ValueError(
                f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"classifier schema expects {len(self.schema)}"
            )
        return X

    def feature_importance(self) -> dict[str, float]:
        """Total split gain per feature name; never-split features map to 0."""
        totals = np.zeros(len(self.schema))
        for tree in self.trees:
            internal = tree.feature >= 0
            np.add.at(totals, tree.feature[internal], tree.gain[internal])
        return {name: float(g) for name, g in zip(self.schema.names, totals)}


def train_gbdt(
    data: Sequence[LabeledPair], params: GbdtParams, schema: FeatureSchema
) -> PairClassifier:
    if not data:
        raise ValueError("no training pairs")
    X = np.stack([lp.features for lp in data]).astype(np.float64)
    y = np.array([lp.label for lp in data], dtype=np.float64)
    if X.shape[1] != len(schema):
        raise ValueError(f"features have {X.shape[1]} columns, schema expects {len(schema)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values in training data")
    positives = int(y.sum())
    if positives == 0 or positives == len(y):
        raise ValueError("training data must contain both classes")

    rate = positives / len(y)
    base_score = math.log(rate / (1.0 - rate))
    margins = np.full(len(y), base_score, dtype=np.float64)
    losses = [_logloss(y, _sigmoid(margins))]

    rng = np.random.default_rng(params.seed)
    n_sub = max(1, int(round(params.subsample * len(y))))
    trees: list[Tree] = []
    for _ in range(params.n_trees):
        p = _sigmoid(margins)
        residuals = y - p
        hessians = p * (1.0 - p)
        rows = np.arange(len(y)) if n_sub == len(y) else np.sort(rng.permutation(len(y))[:n_sub])
        builder = _TreeBuilder(X, residuals, hessians, params)
        builder.build(rows, depth=0)
        tree = builder.tree()
        trees.append(tree)
        margins += tree.predict(X)
        losses.append(_logloss(y, _sigmoid(margins)))

    return PairClassifier(params, schema, base_score, trees, np.array(losses))


def sample_training_pairs(
    train_users: Collection[str],
    candidate_pairs: Collection[CandidatePair],
    truth: Collection[CandidatePair],
    feature_source,
    neg_ratio: int = 5,
    seed: int = 0,
) -> list[LabeledPair]:
    """Positives: every truth pair over the training users (candidates or not;
    pairs the KNN stage missed are flagged). Negatives: candidate pairs outside
    the truth, down-sampled to at most ``neg_ratio`` per positive, deterministic
    in ``seed``."""
    users = set(train_users)
    truth_in_train = {p for p in truth if p.a in users and p.b in users}
    candidates = set(candidate_pairs)
    pos_candidates = sorted(candidates & truth_in_train)
    pos_missed = sorted(truth_in_train - candidates)
    if not pos_candidates and not pos_missed:
        raise ValueError("no positive pairs among the training users")
    negatives = sorted(candidates - truth_in_train)
    cap = neg_ratio * (len(pos_candidates) + len(pos_missed))
    if len(negatives) > cap:
        negatives = sorted(random.Random(seed).sample(negatives, cap))
    ordered = (
        [(p, 1, True) for p in pos_candidates]
        + [(p, 1, False) for p in pos_missed]
        + [(p, 0, True) for p in negatives]
    )
    matrix = feature_source.matrix([p for p, _, _ in ordered])
    return [
        LabeledPair(p, matrix[i], label, flag)
        for i, (p, label, flag) in enumerate(ordered)
    ]


def score_pairs(
    clf: PairClassifier,
    pairs: Sequence[CandidatePair],
    X: np.ndarray,
    schema: FeatureSchema | None = None,
) -> list[ScoredPair]:
    """Scores in (0,1), sorted descending, ties broken by canonical pair order."""
    if schema is not None and schema != clf.schema:
        raise ValueError("feature schema does not match the classifier's schema")
    if len(pairs) != X.shape[0]:
        raise ValueError(f"{len(pairs)} pairs but {X.shape[0]} feature rows")
    probs = clf.predict_proba(X)
    scored = [ScoredPair(p, float(s)) for p, s in zip(pairs, probs)]
    scored.sort(key=lambda sp: (-sp.score, sp.pair))
    return scored


def feature_importance(clf: PairClassifier) -> dict[str, float]:
    return clf.feature_importance()


def write_importance_report(path: str | Path, importance: Mapping[str, float]) -> None:
    """`feature TAB gain`, descending gain, ties by name."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, gain in sorted(importance.items(), key=lambda kv: (-kv[1], kv[0])):
            fh.write(f"{name}\t{gain!r}\n")


def save_classifier(path: str | Path, clf: PairClassifier) -> None:
    meta = {
        "params": {
            "n_trees": clf.params.n_trees,
            "max_depth": clf.params.max_depth,
            "learning_rate": clf.params.learning_rate,
            "min_leaf": clf.params.min_leaf,
            "subsample": clf.params.subsample,
            "seed": clf.params.seed,
        },
        "schema": list(clf.schema.names),
        "base_score": clf.base_score,
        "n_trees": len(clf.trees),
    }
    arrays: dict[str, np.ndarray] = {
        "node_counts": np.array([t.feature.shape[0] for t in clf.trees], dtype=np.int64),
        "train_logloss": clf.train_logloss,
    }
    if clf.trees:
        arrays["feature"] = np.concatenate([t.feature for t in clf.trees])
        arrays["threshold"] = np.concatenate([t.threshold for t in clf.trees])
        arrays["left"] = np.concatenate([t.left for t in clf.trees])
        arrays["right"] = np.concatenate([t.right for t in clf.trees])
        arrays["value"] = np.concatenate([t.value for t in clf.trees])
        arrays["gain"] = np.concatenate([t.gain for t in clf.trees])
    write_artifact(path, "classifier", meta, arrays)


def load_classifier(path: str | Path) -> PairClassifier:
    _, meta, arrays = read_artifact(path, expected_kind="classifier")
    params = GbdtParams(**meta["params"])
    schema = FeatureSchema(tuple(meta["schema"]))
    trees: list[Tree] = []
    start = 0
    for count in arrays["node_counts"]:
        stop = start + int(count)
        trees.append(
            Tree(
                arrays["feature"][start:stop],
                arrays["threshold"][start:stop],
                arrays["left"][start:stop],
                arrays["right"][start:stop],
                arrays["value"][start:stop],
                arrays["gain"][start:stop],
            )
        )
        start = stop
    return PairClassifier(params, schema, meta["base_score"], trees, arrays["train_logloss"])
