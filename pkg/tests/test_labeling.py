from dataclasses import replace
from datetime import date
from decimal import Decimal

import pytest

from trxcat.corpus import Dataset, Transaction, generate_synthetic, load_synth_config
from trxcat.errors import ConfigError
from trxcat.labeling import CategoryRule, RuleSet, agreement, apply_rules, label_dataset, load_rules
from trxcat.preprocess import CleaningConfig

ROW2 = "virement en votre faveur avance salaires 10.2021 1000.0 carte numero 123"


def _tx(desc, value="1000.00", cat=None, i=0):
    return Transaction(f"t{i}", desc, Decimal(value), date(2022, 11, 9), cat)


SALARY_RULES = RuleSet((
    CategoryRule("SALARY", ("salaire",), sign="income", priority=5),
    CategoryRule("ADVANCE SALARY", ("avance", "salaire"), sign="income", priority=10),
))


class TestApplyRules:
    def test_priority_wins(self):
        assert apply_rules(_tx(ROW2), SALARY_RULES) == "ADVANCE SALARY"

    def test_shipped_rules_on_row2(self, rules):
        assert apply_rules(_tx(ROW2), rules) == "ADVANCE SALARY"

    def test_empty_ruleset(self):
        assert apply_rules(_tx(ROW2), RuleSet(())) is None

    def test_sign_blocks_match(self):
        assert apply_rules(_tx("avance sur salaire", "-50.00"), SALARY_RULES) is None

    def test_file_order_breaks_ties(self):
        rs = RuleSet((CategoryRule("X", ("abc",), priority=1), CategoryRule("Y", ("abc",), priority=1)))
        assert apply_rules(_tx("abc"), rs) == "X"

    def test_exclude(self):
        rs = RuleSet((CategoryRule("SALARY", ("salaire",), ("avance",)),))
        assert apply_rules(_tx("salaire mars"), rs) == "SALARY"
        assert apply_rules(_tx("avance salaire"), rs) is None

    def test_case_and_accent_insensitive_substring(self):
        rs = RuleSet((CategoryRule("RENT", ("loyer",)),))
        assert apply_rules(_tx("PRLV LOYERS JANVIER"), rs) == "RENT"
        rs = RuleSet((CategoryRule("TAXES", ("impot",)),))
        assert apply_rules(_tx("DGFIP IMPÔT REVENU"), rs) == "TAXES"

    def test_default_marker(self):
        assert apply_rules(_tx("zzz"), RuleSet((), default="OTHER")) == "OTHER"

    @pytest.mark.parametrize("kw", [
        {"include": ()},
        {"include": ("a",), "exclude": ("a",)},
        {"include": ("a",), "sign": "both"},
    ])
    def test_invalid_rule(self, kw):
        with pytest.raises(ConfigError):
            CategoryRule("X", **kw)

    def test_taxonomy_validation(self, rules):
        rules.validate_taxonomy(load_synth_config().taxonomy)
        with pytest.raises(ConfigError):
            rules.validate_taxonomy({"GROCERIES"})


class TestLabelDataset:
    def test_empty(self, rules):
        ds, report = label_dataset(Dataset([]), rules)
        assert len(ds) == 0 and report.total == 0 and report.unlabeled_fraction == 0.0

    def test_coverage_on_synthetic(self, small_corpus, rules):
        stripped = Dataset([replace(t, category=None) for t in small_corpus.records])
        _, report = label_dataset(stripped, rules)
        assert report.unlabeled_fraction <= 0.05
        assert sum(report.counts.values()) + report.unlabeled == report.total

    def test_agreement_with_generator(self, small_corpus, small_labeled):
        assert agreement(small_corpus.records, small_labeled.records) >= 0.99

    def test_existing_labels_kept_without_force(self, rules):
        ds = Dataset([_tx(ROW2, cat="MANUAL")])
        out, report = label_dataset(ds, rules)
        assert out.records[0].category == "MANUAL" and report.kept_existing == 1
        out, _ = label_dataset(ds, rules, force=True)
        assert out.records[0].category == "ADVANCE SALARY"

    def test_monotone_exclusion(self, rules):
        ds = generate_synthetic(load_synth_config(n_records=10000, seed=4))
        target = next(r for r in rules.rules if r.category == "GROCERIES")
        tighter = replace(target, exclude=target.exclude + ("paris",))
        before = {t.id for t in ds.records if target.matches(t.description.lower(), t.value)}
        after = {t.id for t in ds.records if tighter.matches(t.description.lower(), t.value)}
        assert after <= before and len(after) < len(before)

    def test_independent_of_cleaning_config(self, small_corpus, rules):
        # labeling reads raw text only, so no CleaningConfig can influence it
        a, _ = label_dataset(small_corpus, rules, force=True)
        CleaningConfig(stop_words=frozenset({"cb", "vir"}))
        b, _ = label_dataset(small_corpus, rules, force=True)
        assert [t.category for t in a.records] == [t.category for t in b.records]

    def test_report_json(self, tmp_path, small_labeled, rules):
        _, report = label_dataset(small_labeled, rules, force=True)
        p = tmp_path / "cov.json"
        report.write(p)
        import json
        doc = json.loads(p.read_text())
        assert doc["total"] == len(small_labeled)


def test_load_rules_rejects_bad_file(tmp_path):
    p = tmp_path / "r.toml"
    p.write_text('[[rule]]\ncategory = "X"\n')
    with pytest.raises(ConfigError):
        load_rules(p)
