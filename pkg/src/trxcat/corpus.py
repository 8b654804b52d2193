"""Transactions, dataset I/O, splitting and the synthetic corpus generator."""
from __future__ import annotations

import csv
import io
import json
import math
import random
import string
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

from .config import builtin, load_document, resolve
from .errors import ConfigError, DataError

CENT = Decimal("0.01")
FIELDS = ("id", "description", "value", "date", "category")
SIGNS = ("income", "expense", "any")


@dataclass(frozen=True)
class Transaction:
    id: str
    description: str
    value: Decimal
    date: date
    category: str | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DataError("id must be a non-empty string", field="id")
        if not isinstance(self.description, str) or not self.description.strip():
            raise DataError("description is empty", field="description")
        if not isinstance(self.value, Decimal) or not self.value.is_finite():
            raise DataError("value must be a finite decimal", field="value")
        if self.category is not None and (not isinstance(self.category, str) or not self.category):
            raise DataError("category must be a non-empty string or null", field="category")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "value": format_amount(self.value),
            "date": self.date.isoformat(),
            "category": self.category,
        }


@dataclass
class Dataset:
    records: list[Transaction]
    taxonomy: frozenset[str] = frozenset()

    def __post_init__(self):
        self.records = list(self.records)
        seen = set()
        for i, tx in enumerate(self.records):
            if tx.id in seen:
                raise DataError(f"duplicate id {tx.id!r}", row=i + 1, field="id")
            seen.add(tx.id)
        present = {tx.category for tx in self.records if tx.category is not None}
        if not self.taxonomy:
            self.taxonomy = frozenset(present)
        else:
            self.taxonomy = frozenset(self.taxonomy)
            unknown = present - self.taxonomy
            if unknown:
                raise DataError(f"categories outside taxonomy: {sorted(unknown)}", field="category")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [tx.id for tx in self.records]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.records[i] for i in indices], self.taxonomy)


def format_amount(value: Decimal) -> str:
    return str(value.quantize(CENT))


def parse_amount(raw, row=None) -> Decimal:
    if isinstance(raw, bool) or raw is None:
        raise DataError("missing or invalid value", row=row, field="value")
    try:
        value = Decimal(str(raw).strip())
    except InvalidOperation:
        raise DataError(f"not a decimal: {raw!r}", row=row, field="value") from None
    if not value.is_finite():
        raise DataError(f"non-finite value {raw!r}", row=row, field="value")
    q = value.quantize(CENT)
    if q != value:
        raise DataError(f"more than 2 fraction digits: {raw!r}", row=row, field="value")
    return q


def _parse_date(raw, row=None) -> date:
    try:
        return date.fromisoformat(str(raw).strip())
    except (TypeError, ValueError):
        raise DataError(f"expected YYYY-MM-DD, got {raw!r}", row=row, field="date") from None


def _record_from_mapping(obj: dict, row: int) -> Transaction:
    for name in ("id", "description", "value", "date"):
        if name not in obj or obj[name] is None:
            raise DataError("missing field", row=row, field=name)
    tx_id = obj["id"]
    if isinstance(tx_id, int) and not isinstance(tx_id, bool):
        tx_id = str(tx_id)
    if not isinstance(tx_id, str) or not tx_id:
        raise DataError("id must be a non-empty string", row=row, field="id")
    desc = obj["description"]
    if not isinstance(desc, str) or not desc.strip():
        raise DataError("description is empty", row=row, field="description")
    category = obj.get("category")
    if category == "":
        category = None
    if category is not None and not isinstance(category, str):
        raise DataError("category must be a string or null", row=row, field="category")
    return Transaction(tx_id, desc, parse_amount(obj["value"], row), _parse_date(obj["date"], row), category)


def read_dataset(path, format: str | None = None, taxonomy: Iterable[str] | None = None) -> Dataset:
    """Read a JSONL or CSV transaction file, preserving record order.

    Malformed rows raise :class:`DataError` naming the row (1-based, data rows
    only) and the offending field.
    """
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    text = path.read_text(encoding="utf-8")
    records = []
    if fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_float=Decimal)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", row=lineno) from None
            if not isinstance(obj, dict):
                raise DataError("expected a JSON object", row=lineno)
            records.append(_record_from_mapping(obj, lineno))
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        missing = {"id", "description", "value", "date"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"CSV header lacks columns {sorted(missing)}", row=0)
        for rowno, row in enumerate(reader, start=1):
            records.append(_record_from_mapping(row, rowno))
    else:
        raise DataError(f"unknown format {fmt!r}")
    return Dataset(records, frozenset(taxonomy or ()))


def dumps_jsonl(dataset: Dataset) -> bytes:
    out = io.StringIO()
    for tx in dataset.records:
        out.write(json.dumps(tx.to_json(), ensure_ascii=False))
        out.write("\n")
    return out.getvalue().encode("utf-8")


def write_dataset(dataset: Dataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt == "jsonl":
        path.write_bytes(dumps_jsonl(dataset))
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIELDS)
        for tx in dataset.records:
            row = tx.to_json()
            writer.writerow([row[k] if row[k] is not None else "" for k in FIELDS])


# --------------------------------------------------------------------------
# splitting


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic train/test partition with ``round(f * N)`` training records.

    Stratified by category (unlabeled records form their own stratum) when
    every stratum has at least two records; plain shuffle otherwise. Per-class
    quotas use the largest-remainder rule so the total stays exact.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train = _round_half_up(train_fraction * n)
    rng = random.Random(f"split:{seed}")

    strata: dict[str, list[int]] = {}
    for i, tx in enumerate(dataset.records):
        strata.setdefault("" if tx.category is None else "L:" + tx.category, []).append(i)

    if all(len(v) >= 2 for v in strata.values()):
        keys = sorted(strata)
        exact = {k: train_fraction * len(strata[k]) for k in keys}
        quota = {k: int(math.floor(exact[k])) for k in keys}
        left = n_train - sum(quota.values())
        by_remainder = sorted(keys, key=lambda k: (-(exact[k] - quota[k]), k))
        for k in by_remainder[:max(left, 0)]:
            quota[k] += 1
        train_idx = []
        for k in keys:
            members = list(strata[k])
            rng.shuffle(members)
            train_idx.extend(members[: quota[k]])
    else:
        order = list(range(n))
        rng.shuffle(order)
        train_idx = order[:n_train]

    chosen = set(train_idx)
    train = [i for i in range(n) if i in chosen]
    test = [i for i in range(n) if i not in chosen]
    return dataset.subset(train), dataset.subset(test)


# --------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class Template:
    text: str
    sign: str | None = None


@dataclass(frozen=True)
class CategorySpec:
    label: str
    templates: tuple[Template, ...]
    sign: str = "any"
    weight: float = 1.0
    amount: tuple[float, float] = (1.0, 100.0)
    amount_step: float = 0.01
    slots: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_records: int
    categories: tuple[CategorySpec, ...]
    date_range: tuple[date, date] = (date(2021, 12, 1), date(2023, 1, 31))
    duplicate_rate: float = 0.0
    names: tuple[str, ...] = ()
    cities: tuple[str, ...] = ()
    slots: dict = field(default_factory=dict, hash=False, compare=False)
    uppercase_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.n_records:
            raise ConfigError("n_records must be >= 0")
        if not 0.0 <= self.duplicate_rate <= 1.0:
            raise ConfigError("duplicate_rate must be in [0, 1]")
        if not self.categories:
            raise ConfigError("at least one category is required")
        labels = [c.label for c in self.categories]
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate category labels")
        for c in self.categories:
            if not (c.weight > 0 and math.isfinite(c.weight)):
                raise ConfigError(f"{c.label}: weight must be positive")
            if c.sign not in SIGNS:
                raise ConfigError(f"{c.label}: sign must be one of {SIGNS}")
            if not c.templates:
                raise ConfigError(f"{c.label}: no templates")
            lo, hi = c.amount
            if not 0 < lo <= hi:
                raise ConfigError(f"{c.label}: amount range must satisfy 0 < lo <= hi")
            for t in c.templates:
                if t.sign is not None and t.sign not in ("income", "expense"):
                    raise ConfigError(f"{c.label}: template sign must be income or expense")
                if t.sign is not None and c.sign != "any" and t.sign != c.sign:
                    raise ConfigError(f"{c.label}: template sign {t.sign} violates category sign {c.sign}")
        if self.date_range[0] > self.date_range[1]:
            raise ConfigError("date_range start after end")

    @property
    def taxonomy(self) -> frozenset[str]:
        return frozenset(c.label for c in self.categories)


def load_synth_config(path=None, **overrides) -> SynthConfig:
    """Build a :class:`SynthConfig` from a TOML/JSON file (default: shipped)."""
    path = Path(path) if path is not None else builtin("synth.default.toml")
    doc = load_document(path)
    try:
        names_file = doc.get("names_file", "names.sample.txt")
        names = tuple(read_name_lines(resolve(path, names_file)))
        cats = []
        for c in doc["category"]:
            templates = []
            for t in c["templates"]:
                if isinstance(t, str):
                    templates.append(Template(t))
                else:
                    templates.append(Template(t["text"], t.get("sign")))
            cats.append(CategorySpec(
                label=c["label"],
                templates=tuple(templates),
                sign=c.get("sign", "any"),
                weight=float(c.get("weight", 1.0)),
                amount=tuple(float(a) for a in c.get("amount", (1.0, 100.0))),
                amount_step=float(c.get("amount_step", 0.01)),
                slots={k: tuple(v) for k, v in c.get("slots", {}).items()},
            ))
        dr = doc.get("date_range", ["2021-12-01", "2023-01-31"])
        params = dict(
            seed=int(doc.get("seed", 0)),
            n_records=int(doc.get("n_records", 1000)),
            categories=tuple(cats),
            date_range=(date.fromisoformat(dr[0]), date.fromisoformat(dr[1])),
            duplicate_rate=float(doc.get("duplicate_rate", 0.0)),
            names=names,
            cities=tuple(doc.get("cities", ())),
            slots={k: tuple(v) for k, v in doc.get("slots", {}).items()},
            uppercase_rate=float(doc.get("uppercase_rate", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: invalid synth config: {exc}") from exc
    params.update({k: v for k, v in overrides.items() if v is not None})
    return SynthConfig(**params)


def read_name_lines(path) -> list[str]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


_MONTHS = ("janvier", "fevrier", "mars", "avril", "mai", "juin", "juillet",
           "aout", "septembre", "octobre", "novembre", "decembre")
_COUNTRIES = ("fr", "fr", "fr", "gb", "es", "de", "it", "nl", "ie", "lu", "be")
_CIVILITIES = ("m", "mme", "mr", "mlle", "monsieur", "madame")
_BUILTINS = frozenset({
    "ddmmyy", "dmy", "dmy_dot", "mmyyyy", "month", "card", "card_no", "postal",
    "ref", "name", "last", "city", "amount", "amount_plain", "fx", "country", "civ",
})
# re-drawn when a record is generated as a perturbed copy of an earlier one
_PERTURBED = ("name", "last", "city", "amount", "amount_plain", "fx")


class _Rng:
    """Per-record stream; only ``random()`` is used so output is stable across versions."""

    def __init__(self, seed: int, index: int):
        self._r = random.Random(f"trxcat:{seed}:{index}")

    def random(self) -> float:
        return self._r.random()

    def below(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)

    def pick(self, seq):
        return seq[self.below(len(seq))]

    def digits(self, k: int) -> str:
        return "".join(str(self.below(10)) for _ in range(k))


def _fields(text: str) -> list[str]:
    return [f for _, f, _, _ in string.Formatter().parse(text) if f]


def _draw_amount(spec: CategorySpec, rng: _Rng) -> Decimal:
    lo, hi = spec.amount
    x = math.exp(math.log(lo) + rng.random() * (math.log(hi) - math.log(lo)))
    step = Decimal(str(spec.amount_step))
    units = max(1, int(round(x / float(step))))
    return (step * units).quantize(CENT)


def _ref(rng: _Rng) -> str:
    # consonants only, so random references never spell a rule keyword
    letters = "hjkqvwxz"
    out, run = [], 0
    for _ in range(8):
        if run < 2 and rng.random() < 0.4:
            out.append(str(rng.below(10)))
            run += 1
        else:
            out.append(rng.pick(letters))
            run = 0
    if out[0].isdigit():
        out[0] = rng.pick(letters)
    return "".join(out)


def _render_name(cfg: SynthConfig, rng: _Rng) -> str:
    a, b = rng.pick(cfg.names), rng.pick(cfg.names)
    form = rng.below(4)
    if form == 0:
        return f"{a} {b}"
    if form == 1:
        return f"{b} {a}"
    if form == 2:
        return f"{rng.pick(_CIVILITIES)} {a} {b}"
    return f"{rng.pick(_CIVILITIES)} {b}"


def _draw_field(name: str, ctx: dict, cfg: SynthConfig, spec: CategorySpec, rng: _Rng) -> str:
    d: date = ctx["_date"]
    amount: Decimal = ctx["_amount"]
    if name == "ddmmyy":
        return d.strftime("%d%m%y")
    if name == "dmy":
        return d.strftime("%d/%m/%Y")
    if name == "dmy_dot":
        return d.strftime("%d.%m.%Y")
    if name == "mmyyyy":
        return d.strftime("%m.%Y")
    if name == "month":
        return _MONTHS[d.month - 1]
    if name == "card":
        return "cb****" + rng.digits(4)
    if name == "card_no":
        return rng.digits(3)
    if name == "postal":
        return f"{1 + rng.below(95):02d}" + rng.digits(3)
    if name == "ref":
        return _ref(rng)
    if name == "name":
        return _render_name(cfg, rng)
    if name == "last":
        return rng.pick(cfg.names)
    if name == "city":
        return rng.pick(cfg.cities) if cfg.cities else "city_name"
    if name == "country":
        return rng.pick(_COUNTRIES)
    if name == "civ":
        return rng.pick(_CIVILITIES)
    if name == "amount":
        euros, cents = divmod(int(amount * 100), 100)
        fmt = rng.below(4)
        if fmt == 0:
            return f"{euros},{cents:02d}eur"
        if fmt == 1:
            return f"{euros},{cents:02d} eur"
        if fmt == 2:
            return f"{euros}.{cents:02d} eur"
        return f"{euros},{cents:02d} euros"
    if name == "amount_plain":
        return f"{float(amount):.1f}"
    if name == "fx":
        return f"1 euro = 1,{rng.below(200000):06d}"
    values = spec.slots.get(name) or cfg.slots.get(name)
    if not values:
        raise ConfigError(f"{spec.label}: template uses unknown slot {{{name}}}")
    return rng.pick(values)


def _make_value(amount: Decimal, sign: str, rng: _Rng) -> Decimal:
    if sign == "any":
        sign = "income" if rng.random() < 0.5 else "expense"
    return amount if sign == "income" else -amount


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Generate a deterministic corpus of templated bank transactions.

    Each record draws from its own RNG stream keyed on ``(seed, index)``. A
    ``duplicate_rate`` fraction of records (after the first) are copies of a
    uniformly chosen earlier record with name, city and amount re-drawn.
    """
    cfg = config
    cats = cfg.categories
    total = sum(c.weight for c in cats)
    cum, acc = [], 0.0
    for c in cats:
        acc += c.weight / total
        cum.append(acc)
    span = (cfg.date_range[1] - cfg.date_range[0]).days + 1

    recipes: list[tuple[int, int, dict]] = []
    records = []
    for i in range(cfg.n_records):
        rng = _Rng(cfg.seed, i)
        if i > 0 and rng.random() < cfg.duplicate_rate:
            ci, ti, src = recipes[rng.below(i)]
            spec = cats[ci]
            ctx = dict(src)
            ctx["_amount"] = _draw_amount(spec, rng)
            for name in _fields(spec.templates[ti].text):
                if name in _PERTURBED:
                    ctx[name] = _draw_field(name, ctx, cfg, spec, rng)
            ctx["_value"] = _make_value(ctx["_amount"], spec.templates[ti].sign or spec.sign, rng)
        else:
            r = rng.random()
            ci = next((k for k, edge in enumerate(cum) if r < edge), len(cats) - 1)
            spec = cats[ci]
            ti = rng.below(len(spec.templates))
            ctx = {
                "_date": cfg.date_range[0] + timedelta(days=rng.below(span)),
                "_amount": _draw_amount(spec, rng),
                "_upper": rng.random() < cfg.uppercase_rate,
            }
            for name in _fields(spec.templates[ti].text):
                if name not in ctx:
                    ctx[name] = _draw_field(name, ctx, cfg, spec, rng)
            ctx["_value"] = _make_value(ctx["_amount"], spec.templates[ti].sign or spec.sign, rng)
        recipes.append((ci, ti, ctx))
        text = spec.templates[ti].text.format(**{k: v for k, v in ctx.items() if not k.startswith("_")})
        text = " ".join(text.split())
        if ctx["_upper"]:
            text = text.upper()
        records.append(Transaction(f"tx{i:07d}", text, ctx["_value"], ctx["_date"], spec.label))
    return Dataset(records, cfg.taxonomy)


def strip_labels(dataset: Dataset) -> Dataset:
    return Dataset([replace(tx, category=None) for tx in dataset.records], dataset.taxonomy)


def category_counts(dataset: Dataset, labels: Sequence[str] | None = None) -> dict[str, int]:
    counts = {lab: 0 for lab in (labels or sorted(dataset.taxonomy))}
    for tx in dataset.records:
        if tx.category is not None:
            counts[tx.category] = counts.get(tx.category, 0) + 1
    return counts
