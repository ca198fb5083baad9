import numpy as np
import pytest

from alrank.committee import (
    Committee,
    CommitteeConfig,
    score_queries,
    score_query,
    train_committee,
)
from alrank.gbrank import GBRankModel, TrainConfig, train

SMALL = CommitteeConfig(tree_counts=(3, 8), depths=(1, 2))


def test_default_has_nine_members():
    cfg = CommitteeConfig()
    assert cfg.size == 9
    pairs = [(c.num_trees, c.max_depth) for c in cfg.member_configs()]
    assert pairs == [(t, d) for t in (100, 300, 500) for d in (1, 3, 5)]


def test_cartesian_product_size():
    assert CommitteeConfig(tree_counts=(10,), depths=(1, 2)).size == 2


@pytest.mark.parametrize("kwargs", [{"tree_counts": (10,), "depths": (1,)}, {"depths": (1, 1)}, {"tree_counts": (0, 5)}])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        CommitteeConfig(**kwargs)


@pytest.fixture(scope="module")
def committee(small_corpus):
    return train_committee(list(small_corpus), SMALL)


def test_members_match_independent_training(committee, small_corpus):
    X = np.vstack([g.features for g in small_corpus])
    for member, cfg in zip(committee.members, SMALL.member_configs()):
        solo = train(list(small_corpus), cfg, track_loss=False)
        assert np.array_equal(member.predict(X), solo.predict(X))


def test_score_matrix_equals_member_predict(committee, small_corpus):
    g = small_corpus.queries[3]
    sm = score_query(committee, g)
    assert sm.scores.shape == (4, g.num_docs)
    for m, member in enumerate(committee.members):
        assert np.array_equal(sm.scores[m], member.predict(g.features))


def test_stacked_scoring_equals_per_query(committee, small_corpus):
    groups = list(small_corpus)[:7]
    for sm, g in zip(score_queries(committee, groups), groups):
        assert sm.query_id == g.query_id
        assert np.array_equal(sm.scores, score_query(committee, g).scores)


def test_single_document_query(committee, small_corpus):
    from conftest import make_group

    g = small_corpus.queries[0]
    one = make_group("x", [1], features=g.features[:1])
    assert score_query(committee, one).scores.shape == (4, 1)


def test_zero_tree_members_give_base_score():
    cfg = CommitteeConfig(tree_counts=(1, 2), depths=(1,))
    members = tuple(GBRankModel((), 0.1, base_score=0.5, feature_dim=2) for _ in range(2))
    com = Committee(members, cfg)
    assert np.array_equal(com.score_matrix(np.zeros((3, 2))), np.full((2, 3), 0.5))


def test_deterministic_and_threads(committee, small_corpus, tmp_path):
    again = train_committee(list(small_corpus), SMALL, threads=3)
    assert [m.to_json() for m in again.members] == [m.to_json() for m in committee.members]
    a, b = tmp_path / "a.zip", tmp_path / "b.zip"
    committee.save(a)
    again.save(b)
    assert a.read_bytes() == b.read_bytes()


def test_save_load(committee, small_corpus, tmp_path):
    path = tmp_path / "c.zip"
    committee.save(path)
    back = Committee.load(path)
    assert back == committee
    X = small_corpus.queries[0].features
    assert np.array_equal(back.score_matrix(X), committee.score_matrix(X))


def test_member_seeds_offset():
    cfgs = CommitteeConfig(seed=40).member_configs()
    assert [c.seed for c in cfgs] == list(range(40, 49))
    assert all(isinstance(c, TrainConfig) for c in cfgs)
