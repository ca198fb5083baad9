import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alrank import config as cfgmod
from alrank.acquisition import Strategy


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 500),
    st.integers(1, 500),
    st.integers(1, 50),
    st.floats(0.0, 10.0),
    st.sampled_from(list(Strategy)),
    st.integers(0, 2**31 - 1),
)
def test_dump_load_round_trip(base, bs, cycles, alpha, strategy, seed):
    conf = cfgmod.merge(
        cfgmod.RunConfigFile(),
        {"al": {"base_size": base, "batch_size": bs, "cycles": cycles, "alpha": alpha, "strategy": strategy.value}},
    ).with_seed(seed)
    back = cfgmod.loads(conf.dumps())
    assert back == conf
    assert back.al.committee.seed == seed + cfgmod.COMMITTEE_SEED_OFFSET
    assert back.al.ranker.seed == seed + cfgmod.RANKER_SEED_OFFSET


def test_defaults_explicit():
    text = cfgmod.RunConfigFile().dumps()
    for key in ("base_size", "batch_size", "quota", "tree_counts", "num_trees", "bucket_label_profile"):
        assert key in text


def test_none_overrides_ignored():
    conf = cfgmod.merge(cfgmod.RunConfigFile(), {"al": {"cycles": None}})
    assert conf.al.cycles == 20


@pytest.mark.parametrize(
    "text",
    ["[al]\ncycles = 0\n", "[bogus]\nx = 1\n", "[ranker]\nnum_trees = 'many'\n", "not toml ["],
)
def test_rejected(text):
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.loads(text)
