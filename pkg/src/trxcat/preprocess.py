"""Description cleaning and dictionary-based name anonymization."""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .config import builtin, load_document
from .corpus import Dataset, read_name_lines
from .errors import ConfigError

NAME_TAG = "<name>"

_PUNCT = str.maketrans({c: " " for c in ",;:/()*=.'\"!?+[]{}<>|#&`~^"})
_LIGATURES = str.maketrans({"œ": "oe", "Œ": "oe", "æ": "ae", "Æ": "ae", "ß": "ss"})


def fold(text: str) -> str:
    """Lowercase and strip diacritics (``Numéro`` -> ``numero``)."""
    text = text.translate(_LIGATURES).lower()
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def _compile(patterns, group):
    out = []
    for p in patterns:
        try:
            out.append(re.compile(p))
        except re.error as exc:
            raise ConfigError(f"{group}: pattern {p!r} does not compile: {exc}") from None
    return tuple(out)


def _lexicon_pattern(words):
    if not words:
        return None
    alts = sorted({fold(w).strip() for w in words if w.strip()}, key=lambda w: (-len(w), w))
    body = "|".join(r"[\s-]+".join(re.escape(part) for part in w.split()) for w in alts)
    return re.compile(rf"(?<![\w-])(?:{body})(?![\w-])")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    source_id: str | None = None

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __eq__(self, other):
        if isinstance(other, TokenSequence):
            return self.tokens == other.tokens
        if isinstance(other, (list, tuple)):
            return list(self.tokens) == list(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.tokens)


@dataclass(frozen=True)
class CleaningConfig:
    date_patterns: tuple[str, ...] = ()
    account_patterns: tuple[str, ...] = ()
    amount_currency_patterns: tuple[str, ...] = ()
    misc_patterns: tuple[str, ...] = ()
    cities: tuple[str, ...] = ()
    stop_words: frozenset[str] = frozenset()
    synonym_classes: tuple[tuple[str, tuple[str, ...]], ...] = ()
    _compiled: tuple = field(default=(), init=False, repr=False, compare=False)
    _synonyms: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        groups = (
            _compile(self.date_patterns, "date_patterns")
            + _compile(self.account_patterns, "account_patterns")
            + _compile(self.amount_currency_patterns, "amount_currency_patterns")
            + _compile(self.misc_patterns, "misc_patterns")
        )
        city = _lexicon_pattern(self.cities)
        if city is not None:
            groups += (city,)
        object.__setattr__(self, "_compiled", groups)
        object.__setattr__(self, "stop_words", frozenset(fold(w) for w in self.stop_words))

        lookup, seen = {}, set()
        for idx, (canonical, members) in enumerate(self.synonym_classes):
            phrases = {tuple(fold(canonical).split())} | {tuple(fold(m).split()) for m in members}
            for ph in phrases:
                if not ph:
                    raise ConfigError("empty synonym member")
                if ph in seen:
                    raise ConfigError(f"synonym {' '.join(ph)!r} belongs to more than one class")
                seen.add(ph)
                lookup[ph] = idx
        object.__setattr__(self, "_synonyms", lookup)

    @property
    def patterns(self) -> tuple[re.Pattern, ...]:
        """All removal patterns in application order (city lexicon last)."""
        return self._compiled

    def to_dict(self) -> dict:
        return {
            "date_patterns": list(self.date_patterns),
            "account_patterns": list(self.account_patterns),
            "amount_currency_patterns": list(self.amount_currency_patterns),
            "misc_patterns": list(self.misc_patterns),
            "cities": list(self.cities),
            "stop_words": sorted(self.stop_words),
            "synonyms": [{"canonical": c, "members": list(m)} for c, m in self.synonym_classes],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CleaningConfig":
        try:
            return cls(
                date_patterns=tuple(doc.get("date_patterns", ())),
                account_patterns=tuple(doc.get("account_patterns", ())),
                amount_currency_patterns=tuple(doc.get("amount_currency_patterns", ())),
                misc_patterns=tuple(doc.get("misc_patterns", ())),
                cities=tuple(doc.get("cities", ())),
                stop_words=frozenset(doc.get("stop_words", ())),
                synonym_classes=tuple(
                    (s["canonical"], tuple(s["members"])) for s in doc.get("synonyms", ())
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid cleaning config: {exc}") from exc


def load_cleaning_config(path=None) -> CleaningConfig:
    path = Path(path) if path is not None else builtin("cleaning.default.toml")
    return CleaningConfig.from_dict(load_document(path))


@dataclass(frozen=True)
class NameDictionary:
    names: frozenset[str]
    tag: str = NAME_TAG

    def __post_init__(self):
        folded = frozenset(fold(n).strip() for n in self.names if n.strip())
        if not folded:
            raise ConfigError("name dictionary is empty")
        if fold(self.tag) in folded:
            raise ConfigError("name tag must not itself be a name")
        object.__setattr__(self, "names", folded)

    def __contains__(self, token):
        return fold(token) in self.names


def load_name_dictionary(path=None, tag: str = NAME_TAG) -> NameDictionary:
    path = Path(path) if path is not None else builtin("names.sample.txt")
    try:
        return NameDictionary(frozenset(read_name_lines(path)), tag)
    except OSError as exc:
        raise ConfigError(f"cannot read name dictionary {path}: {exc}") from exc


def _tokenize(text: str) -> list[str]:
    out = []
    for tok in text.translate(_PUNCT).split():
        tok = tok.strip("-")
        if any(c.isalnum() for c in tok):
            out.append(tok)
    return out


def clean(description: str, config: CleaningConfig, source_id: str | None = None) -> TokenSequence:
    """Reduce a raw description to its informative tokens.

    Removal classes run in order (dates, account info, amounts/currencies,
    misc incl. the city lexicon) on the folded text, then stop words are
    dropped. Each synonym class keeps only its first occurrence, rewritten to
    the canonical form, and repeated tokens keep only their first occurrence.
    """
    text = fold(description)
    for pat in config.patterns:
        text = pat.sub(" ", text)
    tokens = [t for t in _tokenize(text) if t not in config.stop_words]

    syn = config._synonyms
    max_len = max((len(k) for k in syn), default=1)
    out: list[str] = []
    emitted: set[str] = set()
    used_classes: set[int] = set()
    i = 0
    while i < len(tokens):
        matched = False
        for width in range(min(max_len, len(tokens) - i), 0, -1):
            cls_idx = syn.get(tuple(tokens[i:i + width]))
            if cls_idx is None:
                continue
            matched = True
            if cls_idx not in used_classes:
                used_classes.add(cls_idx)
                canonical = fold(config.synonym_classes[cls_idx][0])
                if canonical not in emitted:
                    emitted.add(canonical)
                    out.append(canonical)
            i += width
            break
        if matched:
            continue
        tok = tokens[i]
        if tok not in emitted:
            emitted.add(tok)
            out.append(tok)
        i += 1
    return TokenSequence(tuple(out), source_id)


def anonymize_names(tokens: TokenSequence | Sequence[str], names: NameDictionary) -> TokenSequence:
    """Replace dictionary names with the tag; adjacent tags collapse to one."""
    source_id = tokens.source_id if isinstance(tokens, TokenSequence) else None
    out: list[str] = []
    for tok in tokens:
        if tok in names:
            if out and out[-1] == names.tag:
                continue
            out.append(names.tag)
        else:
            out.append(tok)
    return TokenSequence(tuple(out), source_id)


def preprocess_dataset(dataset: Dataset, config: CleaningConfig, names: NameDictionary) -> list[TokenSequence]:
    return [anonymize_names(clean(tx.description, config, tx.id), names) for tx in dataset.records]


@dataclass(frozen=True)
class Preprocessor:
    """Cleaning config and name dictionary bundled for reuse across stages."""

    config: CleaningConfig
    names: NameDictionary

    @classmethod
    def default(cls) -> "Preprocessor":
        return cls(load_cleaning_config(), load_name_dictionary())

    def __call__(self, description: str, source_id: str | None = None) -> TokenSequence:
        return anonymize_names(clean(description, self.config, source_id), self.names)

    def dataset(self, dataset: Dataset) -> list[TokenSequence]:
        return preprocess_dataset(dataset, self.config, self.names)

    def many(self, descriptions: Iterable[str]) -> list[TokenSequence]:
        return [self(d) for d in descriptions]

    def to_dict(self) -> dict:
        return {"cleaning": self.config.to_dict(), "names": sorted(self.names.names), "tag": self.names.tag}

    @classmethod
    def from_dict(cls, doc: dict) -> "Preprocessor":
        return cls(CleaningConfig.from_dict(doc["cleaning"]), NameDictionary(frozenset(doc["names"]), doc["tag"]))
