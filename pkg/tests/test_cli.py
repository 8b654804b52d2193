import json
import subprocess
import sys
from pathlib import Path

import pytest

from trxcat.cli import build_parser, main

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """synth -> preprocess -> dedup -> label -> split -> featurize -> train -> evaluate."""
    d = tmp_path_factory.mktemp("chain")
    assert run("synth", "--out", d / "raw.jsonl", "--n-records", 1500) == 0
    assert run("preprocess", "--in", d / "raw.jsonl", "--out", d / "tokens.jsonl") == 0
    assert run("dedup", "--in", d / "raw.jsonl", "--tokens", d / "tokens.jsonl", "--out", d / "dedup.jsonl",
               "--report", d / "drops.jsonl") == 0
    assert run("label", "--in", d / "dedup.jsonl", "--out", d / "labeled.jsonl", "--force",
               "--report", d / "coverage.json") == 0
    assert run("split", "--in", d / "labeled.jsonl", "--fraction", 0.8, "--train-out", d / "train.jsonl",
               "--test-out", d / "test.jsonl") == 0
    assert run("featurize", "--train", d / "train.jsonl", "--features", "ngram-tfidf", "--max-n", 2,
               "--out", d / "fz.bin") == 0
    assert run("train", "--train", d / "train.jsonl", "--model", "linear_svm", "--featurizer", d / "fz.bin",
               "--out", d / "svm.bin") == 0
    assert run("evaluate", "--model", d / "svm.bin", "--test", d / "test.jsonl", "--report", d / "report.json",
               "--table", d / "table.txt") == 0
    return d


class TestChain:
    def test_outputs_exist(self, chain):
        for name in ("raw.jsonl", "tokens.jsonl", "dedup.jsonl", "drops.jsonl", "labeled.jsonl", "train.jsonl",
                     "test.jsonl", "fz.bin", "svm.bin", "report.json", "table.txt"):
            assert (chain / name).stat().st_size > 0, name

    def test_report(self, chain):
        rep = json.loads((chain / "report.json").read_text())
        assert rep["weighted"]["f1"] > 0.8
        n_test = sum(1 for _ in open(chain / "test.jsonl"))
        assert sum(c["support"] for c in rep["per_class"]) == n_test

    def test_every_stage_has_manifest(self, chain):
        for name in ("raw.jsonl", "tokens.jsonl", "dedup.jsonl", "labeled.jsonl", "fz.bin", "svm.bin",
                     "report.json"):
            m = json.loads((chain / f"{name}.manifest.json").read_text())
            assert m["outputs"] and "versions" in m and "seed" in m

    def test_drop_report_consistent(self, chain):
        n_raw = sum(1 for _ in open(chain / "raw.jsonl"))
        n_kept = sum(1 for _ in open(chain / "dedup.jsonl"))
        n_drop = sum(1 for _ in open(chain / "drops.jsonl"))
        assert n_kept + n_drop == n_raw

    def test_predict(self, chain):
        out = chain / "pred.jsonl"
        assert run("predict", "--model", chain / "svm.bin", "--in", chain / "test.jsonl", "--out", out,
                   "--scores") == 0
        rows = [json.loads(ln) for ln in out.read_text().splitlines()]
        assert len(rows) == sum(1 for _ in open(chain / "test.jsonl"))
        assert all(r["category"] and "scores" in r for r in rows)

    def test_predict_empty(self, chain, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        out = tmp_path / "pred.jsonl"
        assert run("predict", "--model", chain / "svm.bin", "--in", empty, "--out", out) == 0
        assert out.exists() and out.read_text() == ""

    def test_train_without_featurizer(self, chain, tmp_path):
        assert run("train", "--train", chain / "train.jsonl", "--model", "naive_bayes", "--features",
                   "ngram-tfidf", "--out", tmp_path / "nb.bin") == 0
        assert run("evaluate", "--model", tmp_path / "nb.bin", "--test", chain / "test.jsonl",
                   "--report", tmp_path / "r.json") == 0

    def test_report_command(self, chain, capsys):
        assert run("report", "--in", chain / "report.json", "--top", 3) == 0
        assert "Category" in capsys.readouterr().out

    def test_tuned_train(self, chain, tmp_path):
        spec = tmp_path / "spec.toml"
        spec.write_text("epochs = 2\n[grid]\nC = [0.1, 1.0]\n")
        assert run("train", "--train", chain / "train.jsonl", "--model", "linear_svm", "--featurizer",
                   chain / "fz.bin", "--spec", spec, "--folds", 2, "--out", tmp_path / "t.bin") == 0


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert run("frobnicate") == 1

    def test_unknown_flag(self, tmp_path):
        assert run("synth", "--out", tmp_path / "x.jsonl", "--bogus") == 1

    def test_missing_required(self):
        assert run("train", "--model", "naive_bayes") == 1

    def test_bad_fraction(self, tmp_path):
        assert run("split", "--in", "x", "--fraction", "1.5", "--train-out", "a", "--test-out", "b") == 1

    def test_missing_input_file(self, tmp_path):
        assert run("preprocess", "--in", tmp_path / "nope.jsonl", "--out", tmp_path / "t.jsonl") == 2

    def test_malformed_input(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a", "description": "x"}\n')
        assert run("label", "--in", bad, "--out", tmp_path / "o.jsonl") == 2

    def test_not_an_artifact(self, tmp_path, chain):
        junk = tmp_path / "m.bin"
        junk.write_bytes(b"hello world, definitely not a model")
        assert run("predict", "--model", junk, "--in", chain / "test.jsonl", "--out", tmp_path / "p.jsonl") == 2

    def test_unlabeled_training(self, chain, tmp_path):
        rows = [json.loads(ln) for ln in (chain / "train.jsonl").read_text().splitlines()]
        rows[0]["category"] = None
        bad = tmp_path / "unlabeled.jsonl"
        bad.write_text("".join(json.dumps(r) + "\n" for r in rows))
        assert run("train", "--train", bad, "--model", "naive_bayes", "--out", tmp_path / "m.bin") == 2

    def test_help_documents_every_subcommand(self, capsys):
        assert run("--help") == 0
        out = capsys.readouterr().out
        for cmd in ("synth", "preprocess", "dedup", "label", "featurize", "train", "evaluate", "predict",
                    "experiment", "report"):
            assert cmd in out

    def test_every_flag_has_help(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        for name, p in sub.choices.items():
            for action in p._actions:
                if action.option_strings and action.dest != "help":
                    assert action.help, f"{name} {action.option_strings}"


class TestDeterminismAndManifests:
    def test_synth_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run("synth", "--out", a, "--n-records", 300) == 0
        assert run("synth", "--out", b, "--n-records", 300) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_precedence(self, tmp_path, monkeypatch):
        paths = {k: tmp_path / f"{k}.jsonl" for k in ("cfg", "env", "flag", "env2")}
        run("synth", "--out", paths["cfg"], "--n-records", 200)
        monkeypatch.setenv("TRXCAT_SEED", "99")
        run("synth", "--out", paths["env"], "--n-records", 200)
        run("synth", "--out", paths["flag"], "--n-records", 200, "--seed", 99)
        monkeypatch.setenv("TRXCAT_SEED", "5")
        run("synth", "--out", paths["env2"], "--n-records", 200, "--seed", 99)
        assert paths["cfg"].read_bytes() != paths["env"].read_bytes()
        assert paths["env"].read_bytes() == paths["flag"].read_bytes() == paths["env2"].read_bytes()
        m = json.loads((tmp_path / "env2.jsonl.manifest.json").read_text())
        assert m["seed"] == 99

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TRXCAT_SEED", "abc")
        assert run("synth", "--out", tmp_path / "x.jsonl", "--n-records", 10) == 2

    def test_manifest_tracks_input_bytes(self, tmp_path):
        src = tmp_path / "raw.jsonl"
        run("synth", "--out", src, "--n-records", 200)
        names = tmp_path / "names.txt"
        names.write_text("martin\n")

        def manifest():
            assert run("preprocess", "--in", src, "--out", tmp_path / "t.jsonl", "--names", names) == 0
            m = json.loads((tmp_path / "t.jsonl.manifest.json").read_text())
            return m["inputs"], m["configs"]

        first = manifest()
        assert manifest() == first
        names.write_text("martin\ndupont\n")
        second = manifest()
        assert second[1] != first[1] and second[0] == first[0]
        src.write_bytes(src.read_bytes())  # rewritten, same bytes
        assert manifest() == second
        lines = src.read_text().splitlines()
        src.write_text("\n".join(lines[:-1]) + "\n")
        assert manifest()[0] != second[0]


def test_experiment_small_matches_golden(tmp_path):
    out = tmp_path / "res"
    assert run("experiment", "--config", "experiment.small.toml", "--out", out) == 0
    for name in ("experiment.json", "tables.txt", "coverage.json", "manifest.json"):
        assert (out / name).exists()
    assert (out / "tables.txt").read_text() == (GOLDEN / "experiment.small.tables.txt").read_text()
    doc = json.loads((out / "experiment.json").read_text())
    assert {(r["featurizer"], r["split"]["train_fraction"]) for r in doc["reports"]} == {
        ("3-gram TF-IDF", 0.8), ("3-gram TF-IDF", 0.5)}


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "trxcat.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("trxcat ")


class TestPipelineConfig:
    def test_shipped_default(self):
        from trxcat.pipeline import load_pipeline_config
        cfg = load_pipeline_config(env={})
        assert cfg.run_seeds == [1, 2, 3, 4, 5] and cfg.fractions == [0.8, 0.67, 0.5]
        nb = next(m for m in cfg.models if m.spec.kind == "naive_bayes")
        assert nb.features == ("ngram-tfidf",)
        assert [f.options["vector_size"] for f in cfg.featurizers[1:]] == [300, 200, 100]

    def test_explicit_seed_replaces_seed_list(self):
        from trxcat.pipeline import load_pipeline_config
        assert load_pipeline_config(seed=9, env={}).run_seeds == [9]
        assert load_pipeline_config(env={"TRXCAT_SEED": "4"}).run_seeds == [4]

    def test_bad_feature_restriction(self, tmp_path):
        from trxcat.errors import ConfigError
        from trxcat.pipeline import load_pipeline_config
        p = tmp_path / "e.toml"
        p.write_text('[[models]]\nkind = "naive_bayes"\nfeatures = ["bag-of-chars"]\n')
        with pytest.raises(ConfigError):
            load_pipeline_config(p, env={})

    def test_missing_referenced_file(self, tmp_path):
        from trxcat.errors import ConfigError
        from trxcat.pipeline import load_pipeline_config
        p = tmp_path / "e.toml"
        p.write_text('[paths]\nrules = "nowhere.toml"\n')
        with pytest.raises(ConfigError):
            load_pipeline_config(p, env={})
