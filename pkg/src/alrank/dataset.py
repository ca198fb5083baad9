"""Query-grouped ranking data: LETOR parsing, synthetic corpora and pool splits."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAX_LABEL = 4
NUM_LABELS = MAX_LABEL + 1
NUM_BUCKETS = 10
DEFAULT_BUCKET = NUM_BUCKETS - 1


class LetorFormatError(ValueError):
    """Raised for malformed LETOR input; carries the 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Document:
    doc_id: str
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class QueryGroup:
    """All candidate documents of one query.

    Features are stored as one ``(N, D)`` array and labels as an ``(N,)``
    integer array; both are made read-only on construction.
    """

    query_id: str
    bucket: int
    doc_ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        n = features.shape[0]
        if n < 1:
            raise ValueError(f"query {self.query_id}: needs at least one document")
        if labels.shape != (n,) or len(self.doc_ids) != n:
            raise ValueError(f"query {self.query_id}: doc_ids/labels/features disagree in length")
        if not 0 <= self.bucket < NUM_BUCKETS:
            raise ValueError(f"query {self.query_id}: bucket {self.bucket} outside 0..9")
        if labels.min() < 0 or labels.max() > MAX_LABEL:
            raise ValueError(f"query {self.query_id}: labels must lie in 0..{MAX_LABEL}")
        if not np.all(np.isfinite(features)):
            raise ValueError(f"query {self.query_id}: non-finite feature value")
        if len(set(self.doc_ids)) != n:
            raise ValueError(f"query {self.query_id}: duplicate doc_id")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "doc_ids", tuple(str(d) for d in self.doc_ids))

    @property
    def num_docs(self) -> int:
        return self.features.shape[0]

    @property
    def documents(self) -> list[Document]:
        return [
            Document(d, self.features[i], int(self.labels[i]))
            for i, d in enumerate(self.doc_ids)
        ]

    def __eq__(self, other):
        if not isinstance(other, QueryGroup):
            return NotImplemented
        return (
            self.query_id == other.query_id
            and self.bucket == other.bucket
            and self.doc_ids == other.doc_ids
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class Corpus:
    feature_dim: int
    queries: tuple[QueryGroup, ...]
    provenance: str = "parsed"
    clamped_labels: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        if self.provenance not in ("parsed", "synthetic"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        seen = set()
        for g in self.queries:
            if g.query_id in seen:
                raise ValueError(f"duplicate query_id {g.query_id!r}")
            seen.add(g.query_id)
            if g.features.shape[1] != self.feature_dim:
                raise ValueError(
                    f"query {g.query_id}: feature dimensionality {g.features.shape[1]} "
                    f"!= corpus dimensionality {self.feature_dim}"
                )

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self) -> Iterator[QueryGroup]:
        return iter(self.queries)

    @property
    def query_ids(self) -> list[str]:
        return [g.query_id for g in self.queries]

    @property
    def num_docs(self) -> int:
        return sum(g.num_docs for g in self.queries)

    def by_id(self) -> dict[str, QueryGroup]:
        return {g.query_id: g for g in self.queries}

    def subset(self, query_ids: Iterable[str]) -> "Corpus":
        """Queries whose ids are in ``query_ids``, kept in corpus order."""
        wanted = set(query_ids)
        missing = wanted.difference(self.query_ids)
        if missing:
            raise KeyError(f"unknown query ids: {sorted(missing)[:5]}")
        return Corpus(
            self.feature_dim,
            tuple(g for g in self.queries if g.query_id in wanted),
            self.provenance,
        )


# ---------------------------------------------------------------------------
# LETOR / SVMlight text format

_BUCKET_RE = re.compile(r"bucket\s*=\s*(-?\d+)")
_DOCID_RE = re.compile(r"docid\s*=\s*(\S+)")


def _parse_line(line: str, lineno: int):
    body, _, comment = line.partition("#")
    tokens = body.split()
    if len(tokens) < 2:
        raise LetorFormatError("expected '<label> qid:<id> <idx>:<val> ...'", lineno)
    try:
        label = int(float(tokens[0]))
    except ValueError:
        raise LetorFormatError(f"bad label {tokens[0]!r}", lineno) from None
    if float(tokens[0]) != label or label < 0:
        raise LetorFormatError(f"label must be a non-negative integer, got {tokens[0]!r}", lineno)
    if not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise LetorFormatError(f"expected qid:<id>, got {tokens[1]!r}", lineno)
    qid = tokens[1][4:]
    indices = []
    values = []
    for tok in tokens[2:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise LetorFormatError(f"bad feature token {tok!r}", lineno)
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise LetorFormatError(f"bad feature token {tok!r}", lineno) from None
        if idx < 1:
            raise LetorFormatError(f"feature index must be >= 1, got {idx}", lineno)
        if indices and idx <= indices[-1]:
            raise LetorFormatError("feature indices not strictly increasing", lineno)
        if not np.isfinite(val):
            raise LetorFormatError(f"non-finite feature value {val_s!r}", lineno)
        indices.append(idx)
        values.append(val)
    if not indices:
        raise LetorFormatError("line has no features", lineno)

    bucket = None
    doc_id = None
    if comment:
        m = _BUCKET_RE.search(comment)
        if m:
            bucket = int(m.group(1))
            if not 0 <= bucket < NUM_BUCKETS:
                raise LetorFormatError(f"bucket {bucket} outside 0..9", lineno)
        m = _DOCID_RE.search(comment)
        if m:
            doc_id = m.group(1)
    return label, qid, indices, values, bucket, doc_id


def parse_letor(text: str | Iterable[str], feature_dim: int | None = None) -> Corpus:
    """Parse LETOR/SVMlight ranking data.

    Lines look like ``<label> qid:<id> 1:<v> 2:<v> ... # bucket=<b> docid=<d>``.
    Without ``feature_dim`` every line must carry the same highest feature
    index; with it, omitted indices are read as zero. Labels above 4 are
    clamped (counted in ``Corpus.clamped_labels``).
    """
    lines = text.splitlines() if isinstance(text, str) else (l.rstrip("\r\n") for l in text)

    order: list[str] = []
    rows: dict[str, list] = {}
    dim = feature_dim
    clamped = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r").strip()
        if not line or line.startswith("#"):
            continue
        label, qid, indices, values, bucket, doc_id = _parse_line(line, lineno)
        if dim is None:
            dim = indices[-1]
        elif feature_dim is None and indices[-1] != dim:
            raise LetorFormatError(
                f"inconsistent feature dimensionality: {indices[-1]} != {dim}", lineno
            )
        elif indices[-1] > dim:
            raise LetorFormatError(f"feature index {indices[-1]} exceeds dimensionality {dim}", lineno)
        if label > MAX_LABEL:
            clamped += 1
            label = MAX_LABEL
        vec = np.zeros(dim)
        vec[np.asarray(indices) - 1] = values
        if qid not in rows:
            order.append(qid)
            rows[qid] = []
        rows[qid].append((label, vec, bucket, doc_id))

    if not order:
        raise LetorFormatError("empty input")
    if clamped:
        logger.warning("clamped %d labels above %d", clamped, MAX_LABEL)

    groups = []
    for qid in order:
        docs = rows[qid]
        bucket = next((b for _, _, b, _ in docs if b is not None), DEFAULT_BUCKET)
        doc_ids = [d if d is not None else str(i) for i, (_, _, _, d) in enumerate(docs)]
        if len(set(doc_ids)) != len(doc_ids):
            raise LetorFormatError(f"duplicate docid within query {qid}")
        groups.append(
            QueryGroup(
                query_id=qid,
                bucket=bucket,
                doc_ids=tuple(doc_ids),
                features=np.vstack([v for _, v, _, _ in docs]),
                labels=np.array([l for l, _, _, _ in docs]),
            )
        )
    return Corpus(dim, tuple(groups), "parsed", clamped)


def format_letor(corpus: Corpus) -> str:
    """Serialize densely; floats use ``repr`` so parsing round-trips exactly."""
    out = []
    for g in corpus.queries:
        for i, doc_id in enumerate(g.doc_ids):
            feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(g.features[i]))
            out.append(f"{int(g.labels[i])} qid:{g.query_id} {feats} #bucket={g.bucket} docid={doc_id}")
    return "\n".join(out) + "\n"


def read_letor(path, feature_dim: int | None = None) -> Corpus:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_letor(fh.read(), feature_dim)


def write_letor(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_letor(corpus))


# ---------------------------------------------------------------------------
# Synthetic corpora


def _tilted_profile(tilt: float) -> tuple[float, ...]:
    w = np.exp(-tilt * np.arange(NUM_LABELS))
    return tuple(float(x) for x in w / w.sum())


# Exponential tilts of the uniform label distribution: bucket 0 leans to
# high grades, bucket 9 puts ~75% mass on label 0. Label variance falls
# monotonically from bucket 2 on and label-0 mass rises with the bucket.
_TILTS = np.linspace(-0.3, np.log(4.0), NUM_BUCKETS)
DEFAULT_BUCKET_PROFILE: tuple[tuple[float, ...], ...] = tuple(_tilted_profile(t) for t in _TILTS)


@dataclass(frozen=True)
class SynthConfig:
    num_queries: int = 1000
    docs_per_query: int = 30
    feature_dim: int = 8
    bucket_label_profile: tuple[tuple[float, ...], ...] = DEFAULT_BUCKET_PROFILE
    noise_scale: float = 1.0
    qid_offset: int = 0

    def __post_init__(self):
        if self.num_queries < 10:
            raise ValueError(f"num_queries must be >= 10, got {self.num_queries}")
        if self.docs_per_query < 2:
            raise ValueError(f"docs_per_query must be >= 2, got {self.docs_per_query}")
        if self.feature_dim < 2:
            raise ValueError(f"feature_dim must be >= 2, got {self.feature_dim}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        profile = tuple(tuple(float(p) for p in row) for row in self.bucket_label_profile)
        if len(profile) != NUM_BUCKETS:
            raise ValueError(f"profile needs {NUM_BUCKETS} rows, got {len(profile)}")
        for b, row in enumerate(profile):
            if len(row) != NUM_LABELS or min(row) < 0:
                raise ValueError(f"profile row {b} must hold {NUM_LABELS} non-negative probabilities")
            if abs(sum(row) - 1.0) > 1e-9:
                raise ValueError(f"profile row {b} sums to {sum(row)!r}, not 1")
        object.__setattr__(self, "bucket_label_profile", profile)


def gen_synthetic(config: SynthConfig, seed: int) -> Corpus:
    """Draw a corpus whose grades are linearly recoverable from feature 0.

    Every document gets a latent relevance ``r = label + noise_scale * eps``.
    Feature 0 equals ``r``; document features 1.. are ``a_j * r`` plus unit
    Gaussian nuisance, and the last feature is a per-query nuisance value
    (the query half of the concatenated query/document vector).
    Query ``i`` lands in bucket ``i % 10``.
    """
    rng = np.random.default_rng(seed)
    n, d = config.docs_per_query, config.feature_dim
    loadings = np.concatenate([[1.0], rng.uniform(0.2, 1.0, size=d - 1)])
    profile = np.asarray(config.bucket_label_profile)
    doc_ids = tuple(str(j) for j in range(n))

    groups = []
    for i in range(config.num_queries):
        bucket = i % NUM_BUCKETS
        labels = rng.choice(NUM_LABELS, size=n, p=profile[bucket])
        relevance = labels + config.noise_scale * rng.standard_normal(n)
        feats = relevance[:, None] * loadings[None, :]
        feats[:, 1:] += rng.standard_normal((n, d - 1))
        feats[:, -1] = rng.standard_normal()
        groups.append(
            QueryGroup(str(config.qid_offset + i), bucket, doc_ids, feats, labels)
        )
    return Corpus(d, tuple(groups), "synthetic")


# ---------------------------------------------------------------------------
# Labeled / unlabeled pool


@dataclass(frozen=True)
class PoolState:
    labeled: frozenset[str]
    unlabeled: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "labeled", frozenset(self.labeled))
        object.__setattr__(self, "unlabeled", frozenset(self.unlabeled))
        if self.labeled & self.unlabeled:
            raise ValueError("labeled and unlabeled overlap")


def split_pool(corpus: Corpus, base_size: int, seed: int) -> PoolState:
    ids = corpus.query_ids
    if not 0 < base_size < len(ids):
        raise ValueError(f"base_size must lie in (0, {len(ids)}), got {base_size}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ids), size=base_size, replace=False)
    labeled = frozenset(ids[i] for i in chosen)
    return PoolState(labeled, frozenset(ids) - labeled)


def split_corpus(corpus: Corpus, holdout: int, seed: int) -> tuple[Corpus, Corpus]:
    """Random query-level split into (pool, holdout) corpora."""
    state = split_pool(corpus, holdout, seed)
    return corpus.subset(state.unlabeled), corpus.subset(state.labeled)


def query_sort_key(query_id: str):
    """Numeric ids order numerically and before non-numeric ones."""
    return (0, int(query_id), "") if query_id.lstrip("-").isdigit() else (1, 0, query_id)


def groups_for(corpus: Corpus, query_ids: Sequence[str] | frozenset[str]) -> list[QueryGroup]:
    wanted = set(query_ids)
    return [g for g in corpus.queries if g.query_id in wanted]
