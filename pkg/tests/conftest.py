import numpy as np
import pytest

from alrank.dataset import Corpus, QueryGroup, SynthConfig, gen_synthetic


def make_group(qid, labels, features=None, bucket=0):
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if features is None:
        features = np.column_stack([labels.astype(float), np.arange(n, dtype=float)])
    return QueryGroup(str(qid), bucket, tuple(f"d{i}" for i in range(n)), features, labels)


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    return gen_synthetic(SynthConfig(num_queries=60, docs_per_query=12, feature_dim=5), seed=11)


@pytest.fixture(scope="session")
def small_validation() -> Corpus:
    cfg = SynthConfig(num_queries=20, docs_per_query=12, feature_dim=5, qid_offset=10_000)
    return gen_synthetic(cfg, seed=12)
