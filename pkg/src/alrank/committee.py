"""Query-by-committee ensembles of GBRank models."""

from __future__ import annotations

import json
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .dataset import QueryGroup
from .gbrank import GBRankModel, TrainConfig, TrainingSet, boost


@dataclass(frozen=True)
class CommitteeConfig:
    tree_counts: tuple[int, ...] = (100, 300, 500)
    depths: tuple[int, ...] = (1, 3, 5)
    shrinkage: float = 0.1
    min_samples_leaf: int = 5
    temperature: float = 1.0
    max_bins: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tree_counts", tuple(int(t) for t in self.tree_counts))
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if len(self.tree_counts) * len(self.depths) < 2:
            raise ValueError("a committee needs at least two members")
        if len(set(self.tree_counts)) != len(self.tree_counts) or len(set(self.depths)) != len(self.depths):
            raise ValueError("tree_counts and depths must not repeat")
        self.member_configs()  # TrainConfig validates every combination

    @property
    def size(self) -> int:
        return len(self.tree_counts) * len(self.depths)

    def member_configs(self) -> list[TrainConfig]:
        """One TrainConfig per member, ordered by (tree_count, depth); member m gets seed + m."""
        return [
            TrainConfig(
                num_trees=t,
                max_depth=d,
                shrinkage=self.shrinkage,
                min_samples_leaf=self.min_samples_leaf,
                temperature=self.temperature,
                max_bins=self.max_bins,
                seed=self.seed + m,
            )
            for m, (t, d) in enumerate(product(sorted(self.tree_counts), sorted(self.depths)))
        ]


@dataclass(frozen=True)
class ScoreMatrix:
    query_id: str
    scores: np.ndarray  # (M, N): rows are members, columns documents

    @property
    def num_members(self) -> int:
        return self.scores.shape[0]

    @property
    def num_docs(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True, eq=False)
class Committee:
    members: tuple[GBRankModel, ...]
    config: CommitteeConfig

    def __len__(self) -> int:
        return len(self.members)

    def __eq__(self, other):
        if not isinstance(other, Committee):
            return NotImplemented
        return self.config == other.config and self.members == other.members

    def _families(self):
        """Members grouped by depth, each group sorted by tree count.

        Within a group every member is a prefix of the largest one, so
        scoring walks the largest model once and snapshots partial sums.
        """
        groups: dict[int, list[int]] = {}
        for m, model in enumerate(self.members):
            depth = model.config.max_depth if model.config is not None else None
            groups.setdefault(depth, []).append(m)
        out = []
        for idxs in groups.values():
            idxs.sort(key=lambda m: len(self.members[m].trees))
            big = self.members[idxs[-1]]
            prefix = all(
                self.members[m].trees == big.trees[: len(self.members[m].trees)]
                and self.members[m].shrinkage == big.shrinkage
                and self.members[m].base_score == big.base_score
                for m in idxs
            )
            if prefix:
                out.append(idxs)
            else:
                out.extend([m] for m in idxs)
        return out

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        """(M, n) member scores for a stacked feature matrix."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        dim = self.members[0].feature_dim
        if dim is not None and X.shape[1] != dim:
            raise ValueError(f"expected {dim} features, got {X.shape[1]}")
        out = np.empty((len(self.members), X.shape[0]))
        for idxs in self._families():
            big = self.members[idxs[-1]]
            total = np.zeros(X.shape[0])
            stops = {len(self.members[m].trees): m for m in idxs}
            for k, tree in enumerate(big.trees, start=1):
                tree.accumulate(X, total)
                if k in stops:
                    m = stops[k]
                    out[m] = self.members[m].base_score + self.members[m].shrinkage * total
            for m in idxs:
                if len(self.members[m].trees) == 0:
                    out[m] = self.members[m].base_score
        return out

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        """Zip archive: ``manifest.json`` plus one ``member_XX.json`` per member."""
        manifest = {
            "format": "gbrank-committee/1",
            "config": asdict(self.config),
            "members": [f"member_{m:02d}.json" for m in range(len(self.members))],
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            _write_entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
            for name, model in zip(manifest["members"], self.members):
                _write_entry(zf, name, model.to_json())

    @classmethod
    def load(cls, path) -> "Committee":
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format") != "gbrank-committee/1":
                raise ValueError(f"{path}: not a committee archive")
            cfg = manifest["config"]
            config = CommitteeConfig(**cfg)
            members = tuple(GBRankModel.from_json(zf.read(n).decode()) for n in manifest["members"])
        return cls(members, config)


def _write_entry(zf: zipfile.ZipFile, name: str, text: str) -> None:
    # fixed timestamp keeps archives byte-identical across runs
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, text)


def train_committee(
    labeled_queries: Sequence[QueryGroup],
    config: CommitteeConfig,
    threads: int = 1,
) -> Committee:
    """Train one GBRank per (tree_count, depth) on the same labeled data.

    Boosting here is deterministic, so the member with fewer trees at a given
    depth equals the first rounds of the largest one; each depth is boosted
    once and truncated.
    """
    data = TrainingSet(labeled_queries, config.max_bins)
    configs = config.member_configs()
    largest: dict[int, TrainConfig] = {}
    for cfg in configs:
        if cfg.max_depth not in largest or cfg.num_trees > largest[cfg.max_depth].num_trees:
            largest[cfg.max_depth] = cfg
    depths = sorted(largest)

    def fit(depth):
        return boost(data, largest[depth], track_loss=False)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = dict(zip(depths, pool.map(fit, depths)))
    else:
        fitted = {dep: fit(dep) for dep in depths}

    members = []
    for cfg in configs:
        full = fitted[cfg.max_depth]
        members.append(
            GBRankModel(
                full.trees[: cfg.num_trees],
                full.shrinkage,
                full.base_score,
                full.feature_dim,
                cfg,
            )
        )
    return Committee(tuple(members), config)


def score_query(committee: Committee, group: QueryGroup) -> ScoreMatrix:
    return ScoreMatrix(group.query_id, committee.score_matrix(group.features))


def score_queries(committee: Committee, groups: Sequence[QueryGroup]) -> list[ScoreMatrix]:
    """Score many queries in one stacked pass; same values as per-query scoring."""
    if not groups:
        return []
    scores = committee.score_matrix(np.vstack([g.features for g in groups]))
    out = []
    start = 0
    for g in groups:
        out.append(ScoreMatrix(g.query_id, scores[:, start : start + g.num_docs]))
        start += g.num_docs
    return out
