"""Pipeline configuration and the corpus-to-report experiment runner."""
from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import builtin, file_sha256, load_document, resolve
from .corpus import Dataset, generate_synthetic, load_synth_config, read_dataset, split
from .errors import ConfigError, DataError
from .evaluation.report import ExperimentTable, build_report
from .featurizer import FEATURIZER_KINDS, FeaturizerSpec, fit_featurizer
from .labeling import CoverageReport, label_dataset, labeled_only, load_rules
from .models import ModelSpec, grid_search, predict, train
from .models.io import model_to_bytes
from .preprocess import Preprocessor, load_cleaning_config, load_name_dictionary
from .similarity import DEFAULT_THRESHOLD, Drop, dedup

log = logging.getLogger(__name__)

SEED_ENV = "TRXCAT_SEED"
DEFAULT_FRACTIONS = (0.8, 0.67, 0.5)

MODEL_NAMES = {
    "logistic_regression": "Logistic Regression",
    "random_forest": "Random Forest",
    "linear_svm": "Linear SVM",
    "naive_bayes": "Naive Bayes",
}


@dataclass(frozen=True)
class ModelEntry:
    name: str
    spec: ModelSpec
    grid: Mapping[str, Sequence] | None = None
    folds: int = 3
    features: tuple[str, ...] | None = None  # featurizer kinds this model runs on (None: all)

    @property
    def tuned(self) -> bool:
        return self.grid is not None

    def runs_on(self, fspec: FeaturizerSpec) -> bool:
        return self.features is None or fspec.kind in self.features


@dataclass
class PipelineConfig:
    seed: int
    cleaning: Path
    names: Path
    rules: Path
    synth: Path | None = None
    corpus: Path | None = None
    relabel: bool = True
    dedup_threshold: float | None = DEFAULT_THRESHOLD
    fractions: list[float] = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    seeds: list[int] | None = None
    featurizers: list[FeaturizerSpec] = field(default_factory=lambda: [FeaturizerSpec()])
    models: list[ModelEntry] = field(default_factory=list)
    per_category: dict | None = None
    synth_overrides: dict = field(default_factory=dict)
    out_dir: Path | None = None
    source: Path | None = None

    @property
    def run_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    def preprocessor(self) -> Preprocessor:
        return Preprocessor(load_cleaning_config(self.cleaning), load_name_dictionary(self.names))

    def input_files(self) -> dict[str, Path]:
        files = {"cleaning": self.cleaning, "names": self.names, "rules": self.rules}
        if self.synth is not None:
            files["synth"] = self.synth
        if self.corpus is not None:
            files["corpus"] = self.corpus
        if self.source is not None:
            files["config"] = self.source
        return files

    def hashes(self) -> dict[str, str]:
        return {k: file_sha256(p) for k, p in sorted(self.input_files().items())}


def resolve_seed(flag: int | None, config_seed: int, env: Mapping[str, str] | None = None) -> int:
    """Seed precedence: command-line flag, then ``TRXCAT_SEED``, then the config."""
    if flag is not None:
        return int(flag)
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return int(config_seed)


def _path(base: Path | None, value, shipped: str | None = None) -> Path:
    if value is None:
        if shipped is None:
            raise ConfigError("missing path")
        return builtin(shipped)
    p = resolve(base, value) if base is not None else Path(value)
    if not p.exists():
        if not Path(value).is_absolute():
            try:
                return builtin(str(value))
            except ConfigError:
                pass
        raise ConfigError(f"referenced file does not exist: {value}")
    return p


def _model_entry(doc: Mapping, seed: int) -> ModelEntry:
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind is None:
        raise ConfigError("model entry needs a 'kind'")
    grid = doc.pop("grid", None)
    folds = int(doc.pop("folds", 3))
    features = doc.pop("features", None)
    if features is not None:
        features = tuple([features] if isinstance(features, str) else features)
        unknown = set(features) - set(FEATURIZER_KINDS)
        if unknown:
            raise ConfigError(f"unknown featurizer kinds {sorted(unknown)} in model entry")
    name = doc.pop("name", None) or (("Fine-tuned " if grid else "") + MODEL_NAMES.get(kind, kind))
    return ModelEntry(name, ModelSpec(kind, doc, seed), grid, folds, features)


def load_pipeline_config(path=None, seed: int | None = None, env: Mapping[str, str] | None = None) -> PipelineConfig:
    path = Path(path) if path is not None else builtin("experiment.default.toml")
    doc = load_document(path)
    paths = doc.get("paths", {})
    run_seed = resolve_seed(seed, doc.get("seed", 1), env)
    corpus = doc.get("corpus", {})
    exp = doc.get("experiment", {})
    synth = paths.get("synth")
    corpus_path = paths.get("corpus")
    if synth is None and corpus_path is None:
        synth = "synth.default.toml"
    fz = [FeaturizerSpec(d.get("kind", "ngram-tfidf"), {k: v for k, v in d.items() if k != "kind"}, run_seed)
          for d in doc.get("featurizers", [{"kind": "ngram-tfidf"}])]
    models = [_model_entry(d, run_seed) for d in doc.get("models", [{"kind": "linear_svm"}])]
    if len({m.name for m in models}) != len(models):
        raise ConfigError("model names must be unique")
    fractions = [float(f) for f in exp.get("fractions", DEFAULT_FRACTIONS)]
    if not fractions or any(not 0 < f < 1 for f in fractions):
        raise ConfigError("fractions must lie in (0, 1)")
    seeds = exp.get("seeds")
    env_map = os.environ if env is None else env
    if seeds is not None and (seed is not None or env_map.get(SEED_ENV) not in (None, "")):
        seeds = [run_seed]  # an explicit seed replaces the configured seed list
    cfg = PipelineConfig(
        seed=run_seed,
        cleaning=_path(path, paths.get("cleaning"), "cleaning.default.toml"),
        names=_path(path, paths.get("names"), "names.sample.txt"),
        rules=_path(path, paths.get("rules"), "rules.sample.toml"),
        synth=_path(path, synth) if synth is not None else None,
        corpus=_path(path, corpus_path) if corpus_path is not None else None,
        relabel=bool(corpus.get("relabel", True)),
        dedup_threshold=corpus.get("dedup_threshold", DEFAULT_THRESHOLD),
        fractions=fractions,
        seeds=[int(s) for s in seeds] if seeds is not None else None,
        featurizers=fz,
        models=models,
        per_category=doc.get("report", {}).get("per_category"),
        synth_overrides={k: corpus[k] for k in ("n_records", "duplicate_rate") if k in corpus},
        out_dir=resolve(path, doc["out_dir"]) if "out_dir" in doc else None,
        source=path,
    )
    if cfg.dedup_threshold is not None and not 0 < cfg.dedup_threshold <= 1:
        raise ConfigError("dedup_threshold must be in (0, 1]")
    return cfg


@dataclass
class PreparedCorpus:
    dataset: Dataset
    coverage: CoverageReport | None
    drops: list[Drop]
    n_raw: int


def prepare_corpus(cfg: PipelineConfig, preprocessor: Preprocessor | None = None) -> PreparedCorpus:
    """Load or synthesize the corpus, weak-label it, drop near-duplicates and unlabeled rows."""
    if cfg.corpus is not None:
        ds = read_dataset(cfg.corpus)
    else:
        ds = generate_synthetic(load_synth_config(cfg.synth, **cfg.synth_overrides))
    n_raw = len(ds)
    coverage = None
    if cfg.relabel or any(r.category is None for r in ds.records):
        ds, coverage = label_dataset(ds, load_rules(cfg.rules), force=cfg.relabel)
    ds = labeled_only(ds)
    drops: list[Drop] = []
    if cfg.dedup_threshold is not None:
        pre = preprocessor or cfg.preprocessor()
        ds, drops = dedup(ds, pre.dataset(ds), cfg.dedup_threshold)
    log.info("corpus: %d raw, %d after labeling and dedup", n_raw, len(ds))
    return PreparedCorpus(ds, coverage, drops, n_raw)


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def run_experiment(dataset: Dataset, cfg: PipelineConfig, fractions: Sequence[float] | None = None,
                   seeds: Sequence[int] | None = None, preprocessor: Preprocessor | None = None,
                   artifact_dir=None) -> ExperimentTable:
    """Evaluate every (featurizer, fraction, seed, model) combination.

    Each run splits the labeled dataset, fits the featurizer on the training
    part only, trains (tuning by cross-validation where a grid is given) and
    scores the held-out part. With ``artifact_dir`` every fitted featurizer
    and model is written there.
    """
    fractions = list(fractions if fractions is not None else cfg.fractions)
    seeds = list(seeds if seeds is not None else cfg.run_seeds)
    if any(r.category is None for r in dataset.records):
        raise DataError("experiment needs a fully labeled dataset")
    pre = preprocessor or cfg.preprocessor()
    tokens = dict(zip(dataset.ids, pre.dataset(dataset)))
    out = Path(artifact_dir) if artifact_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    table = ExperimentTable()
    for fi, fspec in enumerate(cfg.featurizers):
        for frac in fractions:
            for seed in seeds:
                tr, te = split(dataset, frac, seed)
                fz = fit_featurizer(replace(fspec, seed=seed), pre, docs=[tokens[i] for i in tr.ids])
                fz_blob = fz.to_bytes()
                x_tr = fz.transform_tokens([tokens[i] for i in tr.ids])
                x_te = fz.transform_tokens([tokens[i] for i in te.ids])
                y_tr = [r.category for r in tr.records]
                y_te = [r.category for r in te.records]
                stem = f"f{fi}-{frac:g}-s{seed}"
                if out is not None:
                    (out / f"{stem}-featurizer.bin").write_bytes(fz_blob)
                for entry in cfg.models:
                    if not entry.runs_on(fspec):
                        continue
                    spec = replace(entry.spec, seed=seed)
                    if entry.tuned:
                        spec, _ = grid_search(x_tr, y_tr, spec, entry.grid, entry.folds)
                    model = train(x_tr, y_tr, spec, featurizer_ref=fz.ref)
                    if out is not None:
                        (out / f"{stem}-{_slug(entry.name)}.bin").write_bytes(model_to_bytes(model))
                    rep = build_report(y_te, predict(model, x_te), sorted(dataset.taxonomy), model=entry.name,
                                       featurizer=fspec.label, seed=seed,
                                       split={"train_fraction": frac, "seed": seed, "n_train": len(tr),
                                              "n_test": len(te), "hyperparameters": dict(spec.hyperparameters)})
                    log.info("%s | %g | seed %d | %s: weighted F1 %.4f", fspec.label, frac, seed, entry.name, rep.f1)
                    table.reports.append(rep)
    return table


def render_tables(table: ExperimentTable, cfg: PipelineConfig) -> str:
    """Text rendering: per-fraction tables per featurizer, a featurizer comparison and a per-category table."""
    parts = []
    labels = list(dict.fromkeys(r.featurizer for r in table.reports))
    fracs = sorted({r.split["train_fraction"] for r in table.reports}, reverse=True)
    for fz in labels:
        parts.append(f"Weighted metrics by train fraction ({fz}, median over seeds)\n")
        parts.append(table.by_fraction_table(fz))
    if len(labels) > 1:
        parts.append(f"\nWeighted metrics by features at {100 * fracs[0]:g}% train (median over seeds)\n")
        parts.append(table.by_featurizer_table(fracs[0]))
    pc = dict(cfg.per_category or {})
    summary = table.summary_rows()
    frac = float(pc.get("fraction", fracs[0]))
    if "featurizer" in pc:
        fz = cfg.featurizers[int(pc["featurizer"])].label
    else:
        fz = max((s for s in summary if s["train_fraction"] == frac), key=lambda s: s["f1"])["featurizer"]
    if "model" in pc:
        model = pc["model"]
    else:
        model = max((s for s in summary if s["train_fraction"] == frac and s["featurizer"] == fz),
                    key=lambda s: s["f1"])["model"]
    pooled = table.pooled_per_class(fz, frac, model)
    parts.append(f"\nPer-category metrics: {model}, {fz}, {100 * frac:g}% train (pooled over seeds)\n")
    parts.append(pooled.per_category_table())
    return "".join(parts)


def config_summary(cfg: PipelineConfig) -> dict[str, Any]:
    return {
        "seed": cfg.seed,
        "fractions": cfg.fractions,
        "seeds": cfg.run_seeds,
        "dedup_threshold": cfg.dedup_threshold,
        "relabel": cfg.relabel,
        "synth_overrides": cfg.synth_overrides,
        "featurizers": [f.to_json() for f in cfg.featurizers],
        "models": [{"name": m.name, **m.spec.to_json(), "grid": m.grid, "folds": m.folds,
                    "features": list(m.features) if m.features else None} for m in cfg.models],
    }
