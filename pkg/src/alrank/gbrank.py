"""Pairwise gradient-boosted regression trees (GBRank with a logistic loss).

Each boosting round takes the negative gradient of the summed pairwise
cross-entropy with respect to the current document scores, fits a
least-squares regression tree to it and adds the tree scaled by the
shrinkage. Splits are found on per-feature histograms; a feature with at
most ``max_bins`` distinct training values is split exactly at midpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .dataset import QueryGroup

# Minimum SSE reduction for a split to be accepted.
MIN_SPLIT_GAIN = 1e-12


class NoTrainingPairsError(ValueError):
    """The labeled data contains no pair of documents with differing grades."""


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    min_samples_leaf: int = 5
    temperature: float = 1.0
    max_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.shrinkage <= 1:
            raise ValueError(f"shrinkage must lie in (0, 1], got {self.shrinkage}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not 2 <= self.max_bins <= 65535:
            raise ValueError(f"max_bins must lie in [2, 65535], got {self.max_bins}")


# ---------------------------------------------------------------------------
# Pairs and loss


@dataclass(frozen=True, eq=False)
class PairSet:
    """Winner/loser document pairs of a list of queries.

    ``winners``/``losers`` index the concatenation of all documents in query
    order; ``winner_pos``/``loser_pos`` are positions within each pair's query.
    """

    query_ids: tuple[str, ...]
    pair_query: tuple[str, ...]
    winners: np.ndarray
    losers: np.ndarray
    winner_pos: np.ndarray
    loser_pos: np.ndarray
    neg_pos: int

    @property
    def valid(self) -> int:
        return len(self.winners)

    @property
    def pairs(self) -> list[tuple[str, int, int]]:
        """(query_id, winner position, loser position) for every pair."""
        return [
            (q, int(w), int(l))
            for q, w, l in zip(self.pair_query, self.winner_pos, self.loser_pos)
        ]


def _query_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = labels[:, None] > labels[None, :]
    return np.nonzero(diff)


def build_pairs(queries: Sequence[QueryGroup]) -> PairSet:
    """All within-query document pairs with differing grades, winner first.

    A neg-pos pair has an irrelevant loser (grade 0 or 1) and a relevant
    winner (grade 2 or more).
    """
    winners, losers, wpos, lpos, pq = [], [], [], [], []
    offset = 0
    neg_pos = 0
    for g in queries:
        w, l = _query_pairs(g.labels)
        winners.append(w + offset)
        losers.append(l + offset)
        wpos.append(w)
        lpos.append(l)
        pq.extend([g.query_id] * len(w))
        neg_pos += int(np.count_nonzero((g.labels[w] >= 2) & (g.labels[l] <= 1)))
        offset += g.num_docs
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    return PairSet(
        query_ids=tuple(g.query_id for g in queries),
        pair_query=tuple(pq),
        winners=cat(winners),
        losers=cat(losers),
        winner_pos=cat(wpos),
        loser_pos=cat(lpos),
        neg_pos=neg_pos,
    )


def pair_counts(labels: np.ndarray) -> tuple[int, int]:
    """(valid, neg_pos) for one query from its label histogram."""
    hist = np.bincount(np.asarray(labels, dtype=np.int64), minlength=5)
    cum = np.cumsum(hist)
    valid = int(sum(hist[b] * cum[b - 1] for b in range(1, len(hist))))
    neg_pos = int(hist[:2].sum() * hist[2:].sum())
    return valid, neg_pos


def _pair_loss(scores: np.ndarray, winners, losers, temperature: float) -> float:
    return float(_kernels.pair_loss(scores, winners, losers, float(temperature)))


def pairwise_loss(scores, pairs: PairSet, temperature: float = 1.0) -> float:
    """Mean of ``-log sigmoid((s_winner - s_loser) / T)`` over the pairs.

    ``scores`` is either a flat array aligned with the concatenated documents
    the pairs were built from, or a mapping ``query_id -> per-document scores``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if pairs.valid == 0:
        return 0.0
    if isinstance(scores, dict):
        missing = [q for q in pairs.query_ids if q not in scores]
        if missing:
            raise KeyError(f"no scores for query {missing[0]!r}")
        parts = [np.asarray(scores[q], dtype=np.float64) for q in pairs.query_ids]
        scores = np.concatenate(parts)
    scores = np.asarray(scores, dtype=np.float64)
    top = max(int(pairs.winners.max()), int(pairs.losers.max()))
    if top >= len(scores):
        raise KeyError(f"no score for document index {top}")
    return _pair_loss(scores, pairs.winners, pairs.losers, temperature)


def _negative_gradient(scores, query_starts, winners, losers, temperature, n):
    """Negative gradient of the summed pairwise loss w.r.t. each score."""
    qmax = np.maximum.reduceat(scores, query_starts)
    shift = np.repeat(qmax, np.diff(np.append(query_starts, n)))
    out = np.empty(n)
    _kernels.pair_gradient(scores, shift, winners, losers, float(temperature), out)
    return out


# ---------------------------------------------------------------------------
# Trees


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Array-encoded binary tree; ``feature[i] < 0`` marks a leaf.

    A sample goes left at node ``i`` when ``x[feature[i]] <= threshold[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        self.accumulate(np.ascontiguousarray(X, dtype=np.float64), out)
        return out

    def accumulate(self, X: np.ndarray, out: np.ndarray) -> None:
        """``out += predict(X)`` without a temporary."""
        _kernels.tree_predict(X, self.feature, self.threshold, self.left, self.right, self.value, out)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )

    def __eq__(self, other):
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "value")
        )


class BinnedFeatures:
    """Training matrix quantised to per-feature bins.

    ``codes[i, f] <= k`` iff ``X[i, f] <= thresholds[f][k]``.
    """

    def __init__(self, X: np.ndarray, max_bins: int):
        self.n, self.d = X.shape
        self.thresholds: list[np.ndarray] = []
        codes = np.empty(X.shape, dtype=np.uint16)
        for f in range(self.d):
            col = X[:, f]
            uniq = np.unique(col)
            if len(uniq) <= max_bins:
                thr = (uniq[:-1] + uniq[1:]) / 2.0
            else:
                qs = np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
                thr = np.unique(qs)
                thr = thr[thr < uniq[-1]]
            self.thresholds.append(thr)
            codes[:, f] = np.searchsorted(thr, col, side="left")
        self.codes = codes
        self.num_bins = max(len(t) for t in self.thresholds) + 1


def fit_tree(
    binned: BinnedFeatures,
    target: np.ndarray,
    max_depth: int,
    min_samples_leaf: int,
) -> tuple[RegressionTree, np.ndarray]:
    """Least-squares tree on ``target``; also returns each sample's leaf value.

    Grown level by level with one histogram pass per level. The best split
    maximises the SSE reduction; ties go to the lowest feature index, then
    the lowest threshold.
    """
    n, d, nb = binned.n, binned.d, binned.num_bins
    codes = binned.codes
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(target.mean())]
    sample_node = np.zeros(n, dtype=np.int64)
    frontier = [0]

    for _ in range(max_depth):
        if not frontier:
            break
        slot = np.full(len(feature), -1, dtype=np.int64)
        slot[frontier] = np.arange(len(frontier))
        grad_hist, cnt_hist = _kernels.node_histograms(codes, target, sample_node, slot, len(frontier), nb)

        sum_left = np.cumsum(grad_hist, axis=2)[:, :, :-1]
        n_left = np.cumsum(cnt_hist, axis=2)[:, :, :-1]
        tot_sum = grad_hist[:, 0, :].sum(axis=1)[:, None, None]
        tot_n = cnt_hist[:, 0, :].sum(axis=1)[:, None, None]
        sum_right = tot_sum - sum_left
        n_right = tot_n - n_left
        ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = (
                sum_left**2 / n_left
                + sum_right**2 / n_right
                - tot_sum**2 / tot_n
            )
        gain = np.where(ok, gain, -np.inf)

        next_frontier = []
        flat = gain.reshape(len(frontier), -1)
        best = np.argmax(flat, axis=1)
        split_f = np.full(len(feature), -1, dtype=np.int64)
        split_k = np.zeros(len(feature), dtype=np.int64)
        for j, node in enumerate(frontier):
            if not flat[j, best[j]] > MIN_SPLIT_GAIN:
                continue
            f, k = divmod(int(best[j]), nb - 1)
            sl, nl = sum_left[j, f, k], n_left[j, f, k]
            sr, nr = tot_sum[j, 0, 0] - sl, tot_n[j, 0, 0] - nl
            lid = len(feature)
            feature[node] = f
            threshold[node] = float(binned.thresholds[f][k])
            left[node], right[node] = lid, lid + 1
            for child_sum, child_n in ((sl, nl), (sr, nr)):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(child_sum / child_n))
            split_f[node], split_k[node] = f, k
            next_frontier.extend((lid, lid + 1))
        if next_frontier:
            _kernels.route_samples(codes, sample_node, split_f, split_k, np.asarray(left, dtype=np.int64))
        frontier = next_frontier

    tree = RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )
    return tree, tree.value[sample_node]


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True, eq=False)
class GBRankModel:
    trees: tuple[RegressionTree, ...]
    shrinkage: float
    base_score: float = 0.0
    feature_dim: int | None = None
    config: TrainConfig | None = None
    train_loss: tuple[float, ...] = ()

    def predict(self, X) -> np.ndarray:
        """Scores for a ``(n, D)`` matrix (or a single length-D vector)."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.feature_dim is not None and X.shape[1] != self.feature_dim:
            raise ValueError(f"expected {self.feature_dim} features, got {X.shape[1]}")
        X = np.ascontiguousarray(X)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            t.accumulate(X, total)
        out = self.base_score + self.shrinkage * total
        return out[0] if single else out

    def truncated(self, num_trees: int) -> "GBRankModel":
        """The model after its first ``num_trees`` boosting rounds."""
        if not 0 <= num_trees <= len(self.trees):
            raise ValueError(f"cannot truncate {len(self.trees)} trees to {num_trees}")
        config = None
        if self.config is not None:
            config = TrainConfig(**{**asdict(self.config), "num_trees": max(num_trees, 1)})
        return GBRankModel(
            self.trees[:num_trees],
            self.shrinkage,
            self.base_score,
            self.feature_dim,
            config,
            self.train_loss[: num_trees + 1],
        )

    def to_dict(self) -> dict:
        return {
            "format": "gbrank-model/1",
            "base_score": self.base_score,
            "shrinkage": self.shrinkage,
            "feature_dim": self.feature_dim,
            "config": asdict(self.config) if self.config is not None else None,
            "train_loss": list(self.train_loss),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GBRankModel":
        if d.get("format") != "gbrank-model/1":
            raise ValueError(f"not a gbrank model document: format={d.get('format')!r}")
        return cls(
            trees=tuple(RegressionTree.from_dict(t) for t in d["trees"]),
            shrinkage=float(d["shrinkage"]),
            base_score=float(d["base_score"]),
            feature_dim=d.get("feature_dim"),
            config=TrainConfig(**d["config"]) if d.get("config") else None,
            train_loss=tuple(d.get("train_loss", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "GBRankModel":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, GBRankModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def predict(model: GBRankModel, features) -> float | np.ndarray:
    return model.predict(features)


class TrainingSet:
    """Stacked features, binned codes and pairs of a labeled query list.

    Built once and shared when several models train on the same data.
    """

    def __init__(self, queries: Sequence[QueryGroup], max_bins: int = 64):
        queries = list(queries)
        self.pairs = build_pairs(queries)
        if self.pairs.valid == 0:
            raise NoTrainingPairsError("labeled data yields no document pair with differing grades")
        self.X = np.vstack([g.features for g in queries])
        sizes = np.array([g.num_docs for g in queries])
        self.query_starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.feature_dim = self.X.shape[1]
        self.max_bins = max_bins
        self.binned = BinnedFeatures(self.X, max_bins)


def boost(data: TrainingSet, config: TrainConfig, track_loss: bool = True) -> GBRankModel:
    if config.max_bins != data.max_bins:
        raise ValueError("training set was binned with a different max_bins")
    n = data.X.shape[0]
    w, l = data.pairs.winners, data.pairs.losers
    T = config.temperature
    scores = np.zeros(n)
    trees = []
    losses = []
    for _ in range(config.num_trees):
        if track_loss:
            losses.append(_pair_loss(scores, w, l, T))
        residual = _negative_gradient(scores, data.query_starts, w, l, T, n)
        tree, fitted = fit_tree(data.binned, residual, config.max_depth, config.min_samples_leaf)
        trees.append(tree)
        scores += config.shrinkage * fitted
    if track_loss:
        losses.append(_pair_loss(scores, w, l, T))
    return GBRankModel(tuple(trees), config.shrinkage, 0.0, data.feature_dim, config, tuple(losses))


def train(queries: Sequence[QueryGroup], config: TrainConfig, track_loss: bool = True) -> GBRankModel:
    """Fit a pairwise GBRank model to labeled query groups.

    With ``track_loss`` the model's ``train_loss`` holds the mean pairwise
    loss before the first round and after every round.
    Raises NoTrainingPairsError when no query has two distinct grades.
    """
    return boost(TrainingSet(queries, config.max_bins), config, track_loss)


def pairwise_accuracy(model: GBRankModel, queries: Sequence[QueryGroup]) -> float:
    pairs = build_pairs(queries)
    if pairs.valid == 0:
        return float("nan")
    scores = model.predict(np.vstack([g.features for g in queries]))
    return float(np.mean(scores[pairs.winners] > scores[pairs.losers]))
