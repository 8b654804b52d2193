"""Keyword/sign rules that assign weak category labels to raw descriptions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .config import builtin, load_document
from .corpus import Dataset, Transaction
from .errors import ConfigError
from .preprocess import fold


@dataclass(frozen=True)
class CategoryRule:
    category: str
    include: tuple[str, ...]
    exclude: tuple[str, ...] = ()
    sign: str = "any"
    priority: int = 0

    def __post_init__(self):
        inc = tuple(fold(k) for k in self.include)
        exc = tuple(fold(k) for k in self.exclude)
        if not inc or any(not k.strip() for k in inc):
            raise ConfigError(f"{self.category}: include must hold non-empty keywords")
        if set(inc) & set(exc):
            raise ConfigError(f"{self.category}: keywords both included and excluded")
        if self.sign not in ("income", "expense", "any"):
            raise ConfigError(f"{self.category}: sign must be income, expense or any")
        object.__setattr__(self, "include", inc)
        object.__setattr__(self, "exclude", exc)

    def matches(self, text: str, value: Decimal) -> bool:
        if self.sign == "income" and not value > 0:
            return False
        if self.sign == "expense" and not value < 0:
            return False
        return all(k in text for k in self.include) and not any(k in text for k in self.exclude)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[CategoryRule, ...]
    default: str | None = None
    _order: tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        # stable sort keeps file order among equal priorities
        order = sorted(range(len(self.rules)), key=lambda k: -self.rules[k].priority)
        object.__setattr__(self, "_order", tuple(order))

    @property
    def categories(self) -> frozenset[str]:
        return frozenset(r.category for r in self.rules)

    def validate_taxonomy(self, taxonomy) -> None:
        unknown = self.categories - set(taxonomy)
        if unknown:
            raise ConfigError(f"rules name categories outside the taxonomy: {sorted(unknown)}")


def load_rules(path=None) -> RuleSet:
    path = Path(path) if path is not None else builtin("rules.sample.toml")
    doc = load_document(path)
    try:
        rules = tuple(
            CategoryRule(
                category=r["category"],
                include=tuple(r["include"]),
                exclude=tuple(r.get("exclude", ())),
                sign=r.get("sign", "any"),
                priority=int(r.get("priority", 0)),
            )
            for r in doc.get("rule", ())
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: invalid rule: {exc}") from exc
    return RuleSet(rules, doc.get("default"))


def apply_rules(tx: Transaction, rules: RuleSet) -> str | None:
    """Label of the highest-priority matching rule (file order breaks ties)."""
    text = fold(tx.description)
    for k in rules._order:
        rule = rules.rules[k]
        if rule.matches(text, tx.value):
            return rule.category
    return rules.default


@dataclass
class CoverageReport:
    total: int
    counts: dict[str, int]
    unlabeled: int
    newly_labeled: int = 0
    kept_existing: int = 0

    @property
    def unlabeled_fraction(self) -> float:
        return self.unlabeled / self.total if self.total else 0.0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(sorted(self.counts.items())),
            "unlabeled": self.unlabeled,
            "unlabeled_fraction": self.unlabeled_fraction,
            "newly_labeled": self.newly_labeled,
            "kept_existing": self.kept_existing,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def label_dataset(dataset: Dataset, rules: RuleSet, force: bool = False) -> tuple[Dataset, CoverageReport]:
    """Fill missing categories from the rules; ``force`` relabels every record."""
    out: list[Transaction] = []
    counts: dict[str, int] = {}
    unlabeled = newly = kept = 0
    for tx in dataset.records:
        if tx.category is not None and not force:
            label = tx.category
            kept += 1
        else:
            label = apply_rules(tx, rules)
            if label is not None:
                newly += 1
        if label is None:
            unlabeled += 1
        else:
            counts[label] = counts.get(label, 0) + 1
        out.append(tx if label == tx.category else replace(tx, category=label))
    taxonomy = set(dataset.taxonomy) | rules.categories
    if rules.default is not None:
        taxonomy.add(rules.default)
    report = CoverageReport(len(out), counts, unlabeled, newly, kept)
    return Dataset(out, frozenset(taxonomy)), report


def labeled_only(dataset: Dataset) -> Dataset:
    return dataset.subset(i for i, tx in enumerate(dataset.records) if tx.category is not None)


def agreement(a: Sequence[Transaction], b: Sequence[Transaction]) -> float:
    """Fraction of aligned records whose categories agree (both labeled)."""
    pairs = [(x.category, y.category) for x, y in zip(a, b) if x.category and y.category]
    return sum(x == y for x, y in pairs) / len(pairs) if pairs else 0.0
