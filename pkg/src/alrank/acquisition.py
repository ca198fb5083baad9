"""Per-query acquisition criteria and batch selection.

Ranking entropy turns each committee member's scores into pairwise
"u ranks above v" probabilities, builds every document's rank distribution
as a sequential Bernoulli convolution over its competitors, averages those
distributions across the committee and takes their Shannon entropy.
Prediction variance is the committee-mean of each member's within-query
score standard deviation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels
from .committee import Committee, ScoreMatrix, score_queries
from .dataset import QueryGroup, query_sort_key
from .metrics import GainFn, dcg_at_k, rank_by_scores

DEFAULT_TEMPERATURE = 1.0
DEFAULT_ALPHA = 1.0


def _as_scores(score_matrix) -> np.ndarray:
    scores = score_matrix.scores if isinstance(score_matrix, ScoreMatrix) else score_matrix
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 1:
        raise ValueError(f"expected a non-empty (M, N) score matrix, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("score matrix contains non-finite entries")
    return scores


def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")


def pairwise_prob(s_u: float, s_v: float, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Probability that the document scored ``s_u`` ranks above the one scored ``s_v``."""
    _check_temperature(temperature)
    return float(expit((s_u - s_v) / temperature))


def member_rank_distributions(scores, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Rank pmfs for every (member, document): array of shape (M, N, N).

    ``out[m, v, r]`` is the probability that ``r`` other documents outrank
    document ``v`` under member ``m``. Starting from a point mass at rank 0,
    competitors are inserted one at a time; each either beats ``v`` (shift
    the pmf up one rank) or not. A document is never compared with itself.
    """
    _check_temperature(temperature)
    S = _as_scores(scores)
    m, n = S.shape
    diff = (S[:, None, :] - S[:, :, None]) / temperature  # [m, v, u] = s_u - s_v
    beats = expit(diff)  # P(u above v)
    stays = expit(-diff)  # P(v above u)
    own = np.arange(n)
    beats[:, own, own] = 0.0
    stays[:, own, own] = 1.0

    pmf = np.zeros((m, n, n))
    _kernels.rank_pmfs(beats, stays, pmf)
    return pmf


def rank_distribution(member_scores, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """(N, N) array whose row ``v`` is document ``v``'s rank pmf under one scorer."""
    s = np.asarray(member_scores, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ValueError("rank_distribution needs a non-empty 1-d score vector")
    return member_rank_distributions(s[None, :], temperature)[0]


def _entropy_bits(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in bits along the last axis, with 0 log 0 = 0."""
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log2(safe), 0.0), axis=-1)


def doc_entropy(member_pmfs) -> float:
    """Entropy (bits) of the committee-averaged rank pmf of one document.

    ``member_pmfs`` has one row per committee member.
    """
    pmfs = np.asarray(member_pmfs, dtype=np.float64)
    if pmfs.ndim != 2:
        raise ValueError("member_pmfs must be a (M, N) array of equal-length pmfs")
    return float(_entropy_bits(pmfs.mean(axis=0)))


def ranking_entropy_from_pmfs(pmfs: np.ndarray) -> float:
    """Mean document entropy from (M, N, N) member rank distributions."""
    return float(np.mean(_entropy_bits(pmfs.mean(axis=0))))


def ranking_entropy(score_matrix, temperature: float = DEFAULT_TEMPERATURE) -> float:
    return ranking_entropy_from_pmfs(member_rank_distributions(score_matrix, temperature))


def prediction_variance(score_matrix) -> float:
    """Mean over members of the population std of that member's scores."""
    S = _as_scores(score_matrix)
    # centring on the first score makes a constant row exactly zero; a
    # rounded row mean would leave ~1e-16 behind
    return float(np.mean((S - S[:, :1]).std(axis=1)))


def label_variance(labels) -> float:
    """Population standard deviation of a query's grades."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("label_variance of an empty label list")
    return float(labels.std())


def elo_dcg(score_matrix, k: int = 4, gain: GainFn = GainFn.EXPONENTIAL) -> float:
    """Expected-loss DCG proxy.

    Committee-mean DCG@k of each member's own ordering, with clipped scores
    ``max(s, 0)`` standing in for grades, minus the DCG@k of the ordering by
    the committee-mean score with clipped mean scores as grades.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    S = _as_scores(score_matrix)
    pseudo = np.maximum(S, 0.0)
    member_dcg = np.mean([dcg_at_k(pseudo[m][rank_by_scores(S[m])], k, gain) for m in range(len(S))])
    mean = S.mean(axis=0)
    mean_dcg = dcg_at_k(np.maximum(mean, 0.0)[rank_by_scores(mean)], k, gain)
    return float(member_dcg - mean_dcg)


def acquisition_score(re: float, pv: float, alpha: float = DEFAULT_ALPHA) -> float:
    return re + alpha * pv


class Strategy(str, Enum):
    RANDOM = "random"
    RE = "re"
    PV = "pv"
    LV = "lv"
    RE_PV = "re_pv"
    ELO_DCG = "elo_dcg"

    @property
    def needs_committee(self) -> bool:
        return self in (Strategy.RE, Strategy.PV, Strategy.RE_PV, Strategy.ELO_DCG)


@dataclass(frozen=True)
class QueryScore:
    """Acquisition values of one pool query; NaN marks a criterion not computed."""

    query_id: str
    bucket: int
    re: float
    pv: float
    lv: float
    elo_dcg: float
    f: float

    def criterion(self, strategy: Strategy) -> float:
        return {
            Strategy.RE: self.re,
            Strategy.PV: self.pv,
            Strategy.LV: self.lv,
            Strategy.RE_PV: self.f,
            Strategy.ELO_DCG: self.elo_dcg,
        }[strategy]


CSV_COLUMNS = tuple(f.name for f in fields(QueryScore))


def select_batch(
    pool_scores: Sequence[QueryScore],
    bs: int,
    strategy: Strategy | str,
    seed: int | None = None,
) -> list[str]:
    """Top-``bs`` query ids by the strategy's criterion, descending.

    Ties go to the smaller query id. ``random`` draws uniformly without
    replacement and needs ``seed``.
    """
    strategy = Strategy(strategy)
    if bs < 0 or bs > len(pool_scores):
        raise ValueError(f"batch size {bs} exceeds pool of {len(pool_scores)}")
    ordered = sorted(pool_scores, key=lambda q: query_sort_key(q.query_id))
    if strategy is Strategy.RANDOM:
        if seed is None:
            raise ValueError("random selection needs a seed")
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(ordered), size=bs, replace=False)
        return [ordered[i].query_id for i in picks]
    values = [q.criterion(strategy) for q in ordered]
    if any(math.isnan(v) for v in values):
        raise ValueError(f"criterion {strategy.value!r} missing for some pool queries")
    # stable sort on the negated value keeps ascending-id order among ties
    order = sorted(range(len(ordered)), key=lambda i: -values[i])
    return [ordered[i].query_id for i in order[:bs]]


@dataclass
class PmfStats:
    """Running check that emitted rank distributions are valid pmfs."""

    count: int = 0
    max_mass_error: float = 0.0
    min_entry: float = math.inf

    def update(self, pmfs: np.ndarray) -> None:
        self.count += pmfs.shape[0] * pmfs.shape[1]
        self.max_mass_error = max(self.max_mass_error, float(np.max(np.abs(pmfs.sum(axis=-1) - 1.0))))
        self.min_entry = min(self.min_entry, float(pmfs.min()))


def score_pool(
    committee: Committee | None,
    groups: Sequence[QueryGroup],
    temperature: float = DEFAULT_TEMPERATURE,
    alpha: float = DEFAULT_ALPHA,
    k: int = 4,
    gain: GainFn = GainFn.EXPONENTIAL,
    stats: PmfStats | None = None,
) -> list[QueryScore]:
    """QueryScores for a pool; without a committee only LV is filled in.

    LV reads the held-back grades, so it is only meaningful in simulation.
    """
    out = []
    matrices = score_queries(committee, groups) if committee is not None else [None] * len(groups)
    for g, sm in zip(groups, matrices):
        lv = label_variance(g.labels)
        if sm is None:
            out.append(QueryScore(g.query_id, g.bucket, math.nan, math.nan, lv, math.nan, math.nan))
            continue
        pmfs = member_rank_distributions(sm.scores, temperature)
        if stats is not None:
            stats.update(pmfs)
        re = ranking_entropy_from_pmfs(pmfs)
        pv = prediction_variance(sm.scores)
        out.append(
            QueryScore(
                g.query_id,
                g.bucket,
                re,
                pv,
                lv,
                elo_dcg(sm.scores, k, gain),
                acquisition_score(re, pv, alpha),
            )
        )
    return out


def write_scores_csv(scores: Iterable[QueryScore], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for q in scores:
            w.writerow(astuple(q))
