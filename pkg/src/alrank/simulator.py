"""Simulated pool-based active learning for ranking.

A hidden-label oracle stands in for human annotators: selecting a query
simply makes its stored grades visible to training.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from . import __version__
from .acquisition import (
    PmfStats,
    Strategy,
    label_variance,
    prediction_variance,
    score_pool,
    select_batch,
)
from .committee import Committee, CommitteeConfig, score_queries, train_committee
from .dataset import NUM_BUCKETS, Corpus, PoolState, groups_for, split_pool
from .gbrank import GBRankModel, TrainConfig, build_pairs, train
from .metrics import (
    GainFn,
    UndefinedCorrelation,
    best_dcg_at_k,
    bucket_distribution,
    evaluate_model,
    pearson,
)

logger = logging.getLogger(__name__)

# Offset added to the run seed (plus the cycle index) for random selection.
RANDOM_SELECTION_SEED_OFFSET = 1000


class PoolError(ValueError):
    """Pool and validation data cannot support the requested run."""


def _default_ranker() -> TrainConfig:
    return TrainConfig(num_trees=100, max_depth=3)


@dataclass(frozen=True)
class ALConfig:
    base_size: int = 100
    batch_size: int = 100
    cycles: int = 20
    quota: int = 2000
    alpha: float = 1.0
    temperature: float = 1.0
    strategy: Strategy = Strategy.RE_PV
    committee: CommitteeConfig = field(default_factory=CommitteeConfig)
    ranker: TrainConfig = field(default_factory=_default_ranker)
    eval_k: int = 4
    gain: GainFn = GainFn.EXPONENTIAL
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "gain", GainFn(self.gain))
        if self.base_size < 1:
            raise ValueError(f"base_size must be >= 1, got {self.base_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")
        if self.quota < 1:
            raise ValueError(f"quota must be >= 1, got {self.quota}")
        if self.eval_k < 1:
            raise ValueError(f"eval_k must be >= 1, got {self.eval_k}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["gain"] = self.gain.value
        d["committee"]["tree_counts"] = list(self.committee.tree_counts)
        d["committee"]["depths"] = list(self.committee.depths)
        return d


@dataclass(frozen=True)
class CycleReport:
    cycle: int
    labeled: int
    selected: int
    valid_pairs: int
    neg_pos_pairs: int
    dcg_k: float
    r01: float
    bucket_hist: tuple[int, ...]
    selected_ids: tuple[str, ...]
    pmf_count: int = 0
    pmf_max_mass_error: float | None = None
    pmf_min_entry: float | None = None


@dataclass
class RunReport:
    config: dict
    base: dict
    cycles: list[CycleReport]
    baseline: dict | None = None
    metadata: dict = field(default_factory=dict)
    # trained artifacts of the final state; not serialized
    ranker: GBRankModel | None = field(default=None, repr=False, compare=False)
    committee: Committee | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "format": "al-run-report/1",
            "config": self.config,
            "base": self.base,
            "cycles": [asdict(c) for c in self.cycles],
            "baseline": self.baseline,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("format") != "al-run-report/1":
            raise ValueError("not a run report document")
        cycles = []
        for c in d["cycles"]:
            c = dict(c)
            c["bucket_hist"] = tuple(c["bucket_hist"])
            c["selected_ids"] = tuple(c["selected_ids"])
            cycles.append(CycleReport(**c))
        return cls(d["config"], d["base"], cycles, d.get("baseline"), d.get("metadata", {}))

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def csv_rows(self) -> list[list]:
        k = self.config.get("eval_k", 4)
        header = ["cycle", "labeled", "valid_pairs", "neg_pos_pairs", f"dcg{k}", "r01"]
        header += [f"bucket_{b}" for b in range(NUM_BUCKETS)]
        rows = [header]
        for c in self.cycles:
            rows.append(
                [c.cycle, c.labeled, c.valid_pairs, c.neg_pos_pairs, repr(c.dcg_k), repr(c.r01), *c.bucket_hist]
            )
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())

    def mean_dcg(self) -> float:
        return float(np.mean([c.dcg_k for c in self.cycles]))


def compare_runs(report: RunReport, baseline: RunReport, name: str = "baseline") -> dict:
    """Per-cycle and aggregate deltas of ``report`` against ``baseline``."""
    n = min(len(report.cycles), len(baseline.cycles))
    if n == 0:
        raise ValueError("nothing to compare: a report has no cycles")
    mine, base = report.cycles[:n], baseline.cycles[:n]
    dcg_delta = [a.dcg_k - b.dcg_k for a, b in zip(mine, base)]
    dcg_rel = [(a.dcg_k - b.dcg_k) / b.dcg_k * 100 if b.dcg_k else math.nan for a, b in zip(mine, base)]
    mean_a = float(np.mean([c.dcg_k for c in mine]))
    mean_b = float(np.mean([c.dcg_k for c in base]))
    return {
        "name": name,
        "strategy": baseline.config.get("strategy"),
        "cycles_compared": n,
        "dcg_delta": dcg_delta,
        "dcg_rel_pct": dcg_rel,
        "mean_dcg_delta": mean_a - mean_b,
        "mean_dcg_rel_pct": (mean_a - mean_b) / mean_b * 100 if mean_b else math.nan,
        "r01_delta": [a.r01 - b.r01 for a, b in zip(mine, base)],
        "final_valid_pairs_delta": mine[-1].valid_pairs - base[-1].valid_pairs,
        "final_neg_pos_pairs_delta": mine[-1].neg_pos_pairs - base[-1].neg_pos_pairs,
    }


def oracle_annotate(pool: PoolState, qids: Sequence[str]) -> PoolState:
    """Reveal the grades of ``qids``: move them from unlabeled to labeled."""
    qids = list(qids)
    if len(set(qids)) != len(qids):
        raise ValueError("duplicate query ids in annotation request")
    bad = [q for q in qids if q not in pool.unlabeled]
    if bad:
        raise ValueError(f"query {bad[0]!r} is not in the unlabeled pool")
    chosen = frozenset(qids)
    return PoolState(pool.labeled | chosen, pool.unlabeled - chosen)


def _score_pool_threaded(committee, groups, config: ALConfig, stats: PmfStats, threads: int):
    kwargs = dict(temperature=config.temperature, alpha=config.alpha, k=config.eval_k, gain=config.gain)
    if threads <= 1 or len(groups) < 2 * threads:
        return score_pool(committee, groups, stats=stats, **kwargs)
    chunks = [list(c) for c in np.array_split(np.arange(len(groups)), threads)]
    chunk_stats = [PmfStats() for _ in chunks]

    def work(i):
        return score_pool(committee, [groups[j] for j in chunks[i]], stats=chunk_stats[i], **kwargs)

    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(work, range(len(chunks))))
    for s in chunk_stats:
        stats.count += s.count
        stats.max_mass_error = max(stats.max_mass_error, s.max_mass_error)
        stats.min_entry = min(stats.min_entry, s.min_entry)
    return [q for part in parts for q in part]


def run_active_learning(
    corpus: Corpus,
    validation: Corpus,
    config: ALConfig,
    threads: int = 1,
    keep_committee: bool = False,
) -> RunReport:
    """Run ``config.cycles`` rounds of select -> annotate -> retrain -> evaluate.

    Each cycle trains the committee on the current labeled set, scores every
    unlabeled query, annotates the selected batch, retrains the production
    ranker from scratch and evaluates it on ``validation``. The last batch
    shrinks to fit the quota; the run ends early once quota or pool run out.
    With ``keep_committee`` a committee trained on the final labeled set is
    attached to the report.
    """
    overlap = set(corpus.query_ids) & set(validation.query_ids)
    if overlap:
        raise PoolError(f"pool and validation share query ids, e.g. {sorted(overlap)[0]!r}")
    if corpus.feature_dim != validation.feature_dim:
        raise PoolError("pool and validation differ in feature dimensionality")
    if config.base_size >= len(corpus):
        raise PoolError(f"base_size {config.base_size} must be smaller than the pool ({len(corpus)} queries)")
    pool = split_pool(corpus, config.base_size, config.seed)
    val_groups = list(validation.queries)
    k, gain = config.eval_k, config.gain

    def evaluate(labeled):
        ranker = train(labeled, config.ranker, track_loss=False)
        _, mean = evaluate_model(ranker, val_groups, k, gain)
        pairs = build_pairs(labeled)
        return ranker, mean, pairs

    labeled = groups_for(corpus, pool.labeled)
    ranker, mean, pairs = evaluate(labeled)
    base = {
        "labeled": len(labeled),
        "valid_pairs": pairs.valid,
        "neg_pos_pairs": pairs.neg_pos,
        "dcg_k": mean.dcg_k,
        "r01": mean.r01,
    }
    logger.info("base: %d labeled, dcg@%d=%.4f", len(labeled), k, mean.dcg_k)

    cycles: list[CycleReport] = []
    remaining = config.quota
    committee = None
    for c in range(1, config.cycles + 1):
        bs = min(config.batch_size, remaining, len(pool.unlabeled))
        if bs == 0:
            logger.info("quota or pool exhausted before cycle %d", c)
            break
        unlabeled = groups_for(corpus, pool.unlabeled)
        stats = PmfStats()
        if config.strategy.needs_committee:
            committee = train_committee(labeled, config.committee, threads)
        scores = _score_pool_threaded(
            committee if config.strategy.needs_committee else None, unlabeled, config, stats, threads
        )
        selected = select_batch(scores, bs, config.strategy, seed=config.seed + RANDOM_SELECTION_SEED_OFFSET + c)
        pool = oracle_annotate(pool, selected)
        remaining -= bs

        labeled = groups_for(corpus, pool.labeled)
        ranker, mean, pairs = evaluate(labeled)
        by_id = {g.query_id: g for g in unlabeled}
        cycles.append(
            CycleReport(
                cycle=c,
                labeled=len(labeled),
                selected=bs,
                valid_pairs=pairs.valid,
                neg_pos_pairs=pairs.neg_pos,
                dcg_k=mean.dcg_k,
                r01=mean.r01,
                bucket_hist=tuple(int(x) for x in bucket_distribution([by_id[q] for q in selected])),
                selected_ids=tuple(selected),
                pmf_count=stats.count,
                pmf_max_mass_error=stats.max_mass_error if stats.count else None,
                pmf_min_entry=stats.min_entry if stats.count else None,
            )
        )
        logger.info(
            "cycle %d: %d labeled, %d valid pairs, dcg@%d=%.4f, r01=%.4f",
            c, len(labeled), pairs.valid, k, mean.dcg_k, mean.r01,
        )

    if keep_committee:
        committee = train_committee(labeled, config.committee, threads)
    return RunReport(
        config=config.to_dict(),
        base=base,
        cycles=cycles,
        metadata={
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "pool_queries": len(corpus),
            "validation_queries": len(validation),
        },
        ranker=ranker,
        committee=committee,
    )


@dataclass
class CorrelationStudy:
    rows: list[dict]
    correlations: dict[str, float | None]
    k: int = 4

    COLUMNS = ("query_id", "bucket", "lv", "pv", "best_dcg")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r["query_id"], r["bucket"], repr(r["lv"]), repr(r["pv"]), repr(r["best_dcg"])])


def _safe_pearson(x, y) -> float | None:
    try:
        return pearson(x, y)
    except UndefinedCorrelation:
        return None


def correlation_study(
    corpus: Corpus,
    committee: Committee,
    k: int = 4,
    gain: GainFn = GainFn.EXPONENTIAL,
) -> CorrelationStudy:
    """Per-query LV, PV and best DCG@k plus their pairwise Pearson correlations.

    A correlation involving a constant column is reported as None.
    """
    groups = list(corpus.queries)
    rows = []
    for g, sm in zip(groups, score_queries(committee, groups)):
        rows.append(
            {
                "query_id": g.query_id,
                "bucket": g.bucket,
                "lv": label_variance(g.labels),
                "pv": prediction_variance(sm.scores),
                "best_dcg": best_dcg_at_k(g.labels, k, gain),
            }
        )
    col = lambda name: [r[name] for r in rows]
    corr = {
        "lv_pv": _safe_pearson(col("lv"), col("pv")),
        "best_dcg_lv": _safe_pearson(col("best_dcg"), col("lv")),
        "best_dcg_pv": _safe_pearson(col("best_dcg"), col("pv")),
    }
    return CorrelationStudy(rows, corr, k)
