from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError
from .metrics import ClassMetrics, ConfusionMatrix, confusion, weighted_metrics


@dataclass
class EvaluationReport:
    precision: float
    recall: float
    f1: float
    per_class: list[ClassMetrics]
    confusion: ConfusionMatrix
    model: str
    featurizer: str
    split: dict = field(default_factory=dict)
    seed: int | None = None
    zero_division: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.check()

    @property
    def total(self) -> int:
        return self.confusion.total

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion.counts)) / self.total

    def check(self):
        if sum(c.support for c in self.per_class) != self.total:
            raise DataError("per-class supports do not sum to the number of evaluated records")
        for v in (self.precision, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise DataError(f"weighted metric {v} outside [0, 1]")
        if abs(self.recall - self.accuracy) > 1e-12:
            raise DataError("weighted recall differs from accuracy")

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "featurizer": self.featurizer,
            "seed": self.seed,
            "split": self.split,
            "weighted": {"precision": self.precision, "recall": self.recall, "f1": self.f1},
            "per_class": [{"label": c.label, "precision": c.precision, "recall": c.recall, "f1": c.f1,
                           "support": c.support} for c in self.per_class],
            "zero_division": list(self.zero_division),
            "confusion": {"labels": list(self.confusion.labels), "counts": self.confusion.counts.tolist()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EvaluationReport":
        w = doc["weighted"]
        return cls(
            w["precision"], w["recall"], w["f1"],
            [ClassMetrics(c["label"], c["precision"], c["recall"], c["f1"], c["support"]) for c in doc["per_class"]],
            ConfusionMatrix(tuple(doc["confusion"]["labels"]), np.array(doc["confusion"]["counts"], dtype=np.int64)),
            doc["model"], doc["featurizer"], dict(doc.get("split", {})), doc.get("seed"),
            list(doc.get("zero_division", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "EvaluationReport":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from None

    def per_category_table(self, top: int | None = None) -> str:
        return per_category_table(self.per_class, top)


def build_report(y_true: Sequence[str], y_pred: Sequence[str], labels: Sequence[str] | None = None, *,
                 model: str = "", featurizer: str = "", split: dict | None = None,
                 seed: int | None = None) -> EvaluationReport:
    m = confusion(y_true, y_pred, labels)
    return report_from_confusion(m, model=model, featurizer=featurizer, split=split, seed=seed)


def report_from_confusion(m: ConfusionMatrix, *, model="", featurizer="", split=None, seed=None) -> EvaluationReport:
    wm = weighted_metrics(m)
    return EvaluationReport(wm.precision, wm.recall, wm.f1, list(wm.per_class), m, model, featurizer,
                            dict(split or {}), seed, list(wm.zero_division))


def _pct(v: float) -> str:
    return f"{100 * v:.1f}%"


def _render(header: Sequence[str], rows: Sequence[Sequence[str]], rule_after: Sequence[int] = ()) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    out = [fmt(header), "=" * len(fmt(header))]
    for i, r in enumerate(rows):
        out.append(fmt(r))
        if i in rule_after and i != len(rows) - 1:
            out.append("-" * len(fmt(header)))
    return "\n".join(out) + "\n"


def per_category_table(per_class: Sequence[ClassMetrics], top: int | None = None) -> str:
    rows = sorted(per_class, key=lambda c: (-c.support, c.label))
    if top is not None:
        rows = rows[:top]
    return _render(["Category", "Precision", "Recall", "F1", "Support"],
                   [[c.label, _pct(c.precision), _pct(c.recall), _pct(c.f1), str(c.support)] for c in rows])


@dataclass
class ExperimentTable:
    """All evaluation reports of an experiment plus helpers to render summary tables."""

    reports: list[EvaluationReport] = field(default_factory=list)

    def groups(self):
        keys: dict[tuple, list[EvaluationReport]] = {}
        for r in self.reports:
            keys.setdefault((r.featurizer, r.split.get("train_fraction"), r.model), []).append(r)
        return keys

    def median(self, metric: str, featurizer=None, fraction=None, model=None) -> float:
        vals = [getattr(r, metric) for r in self.reports
                if (featurizer is None or r.featurizer == featurizer)
                and (fraction is None or r.split.get("train_fraction") == fraction)
                and (model is None or r.model == model)]
        if not vals:
            raise KeyError("no report matches")
        return float(statistics.median(vals))

    def summary_rows(self) -> list[dict]:
        rows = []
        for (fz, frac, model), reps in self.groups().items():
            rows.append({
                "featurizer": fz, "train_fraction": frac, "model": model, "runs": len(reps),
                "precision": statistics.median(r.precision for r in reps),
                "recall": statistics.median(r.recall for r in reps),
                "f1": statistics.median(r.f1 for r in reps),
            })
        return rows

    def by_fraction_table(self, featurizer: str) -> str:
        """Rows grouped by train fraction, one line per model (median over seeds)."""
        rows, rules = [], []
        fracs = sorted({s["train_fraction"] for s in self.summary_rows() if s["featurizer"] == featurizer},
                       reverse=True)
        for frac in fracs:
            first = True
            for s in self.summary_rows():
                if s["featurizer"] != featurizer or s["train_fraction"] != frac:
                    continue
                rows.append([f"{100 * frac:g}%" if first else "", s["model"], _pct(s["precision"]),
                             _pct(s["recall"]), _pct(s["f1"])])
                first = False
            rules.append(len(rows) - 1)
        return _render(["Train", "Model", "Precision", "Recall", "F1"], rows, rules)

    def by_featurizer_table(self, fraction: float) -> str:
        """Rows grouped by featurizer at one train fraction."""
        rows, rules = [], []
        fzs = list(dict.fromkeys(s["featurizer"] for s in self.summary_rows() if s["train_fraction"] == fraction))
        for fz in fzs:
            first = True
            for s in self.summary_rows():
                if s["featurizer"] != fz or s["train_fraction"] != fraction:
                    continue
                rows.append([fz if first else "", s["model"], _pct(s["precision"]), _pct(s["recall"]), _pct(s["f1"])])
                first = False
            rules.append(len(rows) - 1)
        return _render(["Features", "Model", "Precision", "Recall", "F1"], rows, rules)

    def pooled_per_class(self, featurizer: str, fraction: float, model: str) -> EvaluationReport:
        """Per-category metrics from the confusion matrices of all seeds summed together."""
        reps = [r for r in self.reports if r.featurizer == featurizer and r.model == model
                and r.split.get("train_fraction") == fraction]
        if not reps:
            raise KeyError("no report matches")
        labels = sorted({lab for r in reps for lab in r.confusion.labels})
        total = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for r in reps:
            pos = [labels.index(lab) for lab in r.confusion.labels]
            total[np.ix_(pos, pos)] += r.confusion.counts
        return report_from_confusion(ConfusionMatrix(tuple(labels), total), model=model, featurizer=featurizer,
                                     split={"train_fraction": fraction, "pooled_runs": len(reps)})

    def to_json(self) -> dict:
        return {"reports": [r.to_json() for r in self.reports], "summary": self.summary_rows()}

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentTable":
        return cls([EvaluationReport.from_json(r) for r in doc["reports"]])
