import json

import pytest

from alrank import config as cfgmod
from alrank.cli import main
from alrank.dataset import read_letor
from alrank.metrics import pearson

RUN_FLAGS = ["--bs", "10", "--cycles", "2", "--base", "20", "--tree-counts", "3,6", "--depths", "1,2"]


def cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert cli("gen", "--queries", 80, "--docs", 8, "--dim", 4, "--seed", 1, "-o", d / "pool.txt") == 0
    assert cli("gen", "--queries", 20, "--docs", 8, "--dim", 4, "--seed", 2,
               "--qid-offset", 1000, "-o", d / "val.txt") == 0
    return d


@pytest.fixture(scope="module")
def run_dir(data):
    out = data / "run"
    code = cli("run", "--pool", data / "pool.txt", "--val", data / "val.txt", "--strategy", "re_pv",
               "--seed", 3, "--out-dir", out, *RUN_FLAGS)
    assert code == 0
    return out


class TestGen:
    def test_file_and_determinism(self, data, tmp_path):
        assert len(read_letor(data / "pool.txt")) == 80
        cli("gen", "--queries", 80, "--docs", 8, "--dim", 4, "--seed", 1, "-o", tmp_path / "again.txt")
        assert (tmp_path / "again.txt").read_bytes() == (data / "pool.txt").read_bytes()

    def test_too_few_queries(self, tmp_path, capsys):
        assert cli("gen", "--queries", 5, "-o", tmp_path / "x.txt") == 1
        assert "num_queries" in capsys.readouterr().err

    def test_missing_out(self):
        assert cli("gen", "--queries", 10) == 1

    def test_print_config_round_trips(self, capsys):
        assert cli("gen", "--queries", 50, "--print-config") == 0
        conf = cfgmod.loads(capsys.readouterr().out)
        assert conf.synth.num_queries == 50


class TestRun:
    def test_outputs(self, run_dir):
        for name in ("report.json", "cycles.csv", "ranker.json", "committee.zip", "config.toml"):
            assert (run_dir / name).is_file()
        report = json.loads((run_dir / "report.json").read_text())
        assert len(report["cycles"]) == 2
        assert report["config"]["strategy"] == "re_pv"
        assert report["config"]["seed"] == 3
        assert cfgmod.load(run_dir / "config.toml").al.batch_size == 10

    def test_bogus_strategy(self, data):
        assert cli("run", "--pool", data / "pool.txt", "--val", data / "val.txt", "--strategy", "bogus") == 1

    def test_zero_batch(self, data, capsys):
        assert cli("run", "--pool", data / "pool.txt", "--val", data / "val.txt", "--bs", 0) == 1
        assert "batch_size" in capsys.readouterr().err

    def test_missing_pool_file(self, data, tmp_path):
        assert cli("run", "--pool", tmp_path / "nope.txt", "--val", data / "val.txt", *RUN_FLAGS) == 2

    def test_overlapping_pool_and_validation(self, data, tmp_path):
        code = cli("run", "--pool", data / "pool.txt", "--val", data / "pool.txt",
                   "--out-dir", tmp_path / "o", *RUN_FLAGS)
        assert code == 2

    def test_config_file_and_flag_precedence(self, data, tmp_path, capsys):
        conf = tmp_path / "c.toml"
        conf.write_text('[al]\nbatch_size = 7\ncycles = 3\n\n[committee]\ndepths = [2, 4]\n')
        assert cli("run", "--config", conf, "--cycles", 5, "--print-config") == 0
        eff = cfgmod.loads(capsys.readouterr().out)
        assert eff.al.batch_size == 7
        assert eff.al.cycles == 5
        assert eff.al.committee.depths == (2, 4)

    def test_printed_config_reproduces_run(self, data, run_dir, tmp_path, capsys):
        assert cli("run", "--seed", 3, "--strategy", "re_pv", "--print-config", *RUN_FLAGS) == 0
        conf = tmp_path / "printed.toml"
        conf.write_text(capsys.readouterr().out)
        out = tmp_path / "replay"
        assert cli("run", "--config", conf, "--pool", data / "pool.txt", "--val", data / "val.txt",
                   "--out-dir", out) == 0
        assert (out / "cycles.csv").read_bytes() == (run_dir / "cycles.csv").read_bytes()
        assert (out / "config.toml").read_bytes() == (run_dir / "config.toml").read_bytes()

    def test_unknown_config_key(self, tmp_path):
        conf = tmp_path / "c.toml"
        conf.write_text("[al]\nbatchsize = 7\n")
        assert cli("run", "--config", conf, "--print-config") == 1

    def test_deterministic_across_threads(self, data, run_dir, tmp_path):
        out = tmp_path / "again"
        code = cli("run", "--pool", data / "pool.txt", "--val", data / "val.txt", "--strategy", "re_pv",
                   "--seed", 3, "--threads", 2, "--out-dir", out, *RUN_FLAGS)
        assert code == 0
        for name in ("cycles.csv", "ranker.json", "committee.zip", "config.toml"):
            assert (out / name).read_bytes() == (run_dir / name).read_bytes()
        strip = lambda p: {**json.loads(p.read_text()), "metadata": None}
        assert strip(out / "report.json") == strip(run_dir / "report.json")


class TestAnalyzeEvalReport:
    def test_analyze(self, data, run_dir, tmp_path):
        out = tmp_path / "an"
        assert cli("analyze", "--corpus", data / "pool.txt", "--committee", run_dir / "committee.zip",
                   "--run", run_dir / "report.json", "--out-dir", out) == 0
        csvs = sorted(p.name for p in out.glob("*.csv"))
        assert csvs == ["bucket_distribution.csv", "correlation.csv", "label_distribution.csv"]
        buckets = (out / "bucket_distribution.csv").read_text().splitlines()
        assert sum(int(line.split(",")[1]) for line in buckets[1:]) == 20
        rows = [line.split(",") for line in (out / "correlation.csv").read_text().splitlines()[1:]]
        summary = json.loads((out / "correlation_summary.json").read_text())
        lv, pv, best = ([float(r[i]) for r in rows] for i in (2, 3, 4))
        assert summary["lv_pv"] == pytest.approx(pearson(lv, pv), abs=1e-12)
        assert summary["best_dcg_pv"] == pytest.approx(pearson(best, pv), abs=1e-12)

    def test_analyze_without_committee(self, data, tmp_path):
        assert cli("analyze", "--corpus", data / "pool.txt", "--committee", tmp_path / "none.zip") == 2

    def test_eval(self, data, run_dir, tmp_path, capsys):
        assert cli("eval", "--model", run_dir / "ranker.json", "--data", data / "val.txt",
                   "--out", tmp_path / "q.csv") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["queries"] == 20
        assert 0 <= summary["dcg"] <= summary["best_dcg"]
        assert len((tmp_path / "q.csv").read_text().splitlines()) == 21

    def test_report(self, run_dir, tmp_path, capsys):
        assert cli("report", run_dir / "report.json", "--baseline", run_dir / "report.json",
                   "--out", tmp_path / "cmp.json", "--csv", tmp_path / "cmp.csv") == 0
        cmp = json.loads((tmp_path / "cmp.json").read_text())
        assert cmp[0]["mean_dcg_delta"] == 0.0

    def test_corrupt_report(self, run_dir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli("report", bad, "--baseline", run_dir / "report.json") == 2
