"""Command-line interface: one subcommand per pipeline stage.

Exit status is 0 on success, 1 on usage errors and 2 on data or
configuration errors. Every command writes a JSON manifest next to its
main output recording inputs, config hashes, seed and library versions.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numba
import numpy as np
import scipy

from . import __version__, artifacts
from .config import CONFIG_DIR, builtin, file_sha256, load_document
from .corpus import Dataset, dumps_jsonl, generate_synthetic, load_synth_config, read_dataset, split, write_dataset
from .errors import ConfigError, DataError
from .evaluation.report import EvaluationReport, ExperimentTable, build_report
from .featurizer import FEATURIZER_KINDS, Featurizer, FeaturizerSpec, fit_featurizer
from .labeling import label_dataset, load_rules
from .models import KINDS, ModelSpec, grid_search, predict, predict_scores, train
from .models.io import load_model, save_model
from .models.search import DEFAULT_SVM_GRID
from .pipeline import (SEED_ENV, config_summary, load_pipeline_config, prepare_corpus, render_tables,
                       resolve_seed, run_experiment)
from .preprocess import Preprocessor, load_cleaning_config, load_name_dictionary
from .similarity import DEFAULT_THRESHOLD, dedup, write_drop_report

log = logging.getLogger("trxcat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# manifests


def versions() -> dict[str, str]:
    return {"trxcat": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _entry(path) -> dict[str, str]:
    return {"path": str(path), "sha256": file_sha256(path)}


def write_manifest(target: Path, command: str, *, inputs: dict | None = None, configs: dict | None = None,
                   outputs: dict | None = None, seed: int | None = None, params: dict | None = None) -> Path:
    """Write ``<target>.manifest.json`` (or ``manifest.json`` inside a directory target)."""
    doc = {
        "command": command,
        "seed": seed,
        "params": params or {},
        "inputs": {k: _entry(v) for k, v in sorted((inputs or {}).items()) if v is not None},
        "configs": {k: _entry(v) for k, v in sorted((configs or {}).items()) if v is not None},
        "outputs": {k: _entry(v) for k, v in sorted((outputs or {}).items()) if v is not None},
        "versions": versions(),
    }
    path = target / "manifest.json" if target.is_dir() else target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# helpers


def _config_path(value, default: str) -> Path:
    """A user path, else a shipped config of that name, else the shipped default."""
    if not value:
        return builtin(default)
    p = Path(value)
    if not p.exists() and not p.is_absolute() and (CONFIG_DIR / value).exists():
        return CONFIG_DIR / value
    return p


def _preprocessor(args) -> tuple[Preprocessor, dict]:
    cleaning = _config_path(args.cleaning, "cleaning.default.toml")
    names = _config_path(args.names, "names.sample.txt")
    return Preprocessor(load_cleaning_config(cleaning), load_name_dictionary(names)), {"cleaning": cleaning,
                                                                                       "names": names}


def _add_preprocess_flags(p):
    p.add_argument("--cleaning", metavar="TOML", help="cleaning config (default: shipped)")
    p.add_argument("--names", metavar="TXT", help="name dictionary, one name per line (default: shipped)")


def _seed_flag(p, help_text="random seed (overrides $TRXCAT_SEED and the config)"):
    p.add_argument("--seed", type=int, help=help_text)


def _write_tokens(path: Path, ids, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for i, d in zip(ids, docs):
            fh.write(json.dumps({"id": i, "tokens": list(d)}, ensure_ascii=False) + "\n")


def _read_tokens(path: Path) -> dict[str, list[str]]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out[obj["id"]] = list(obj["tokens"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"bad token record: {exc}", row=lineno) from None
    return out


def _labels(ds, what: str) -> list[str]:
    if any(r.category is None for r in ds.records):
        raise DataError(f"{what} contains unlabeled records; run `trxcat label` first")
    return [r.category for r in ds.records]


def _spec_doc(path) -> dict:
    return load_document(path) if path else {}


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg_path = _config_path(args.config, "synth.default.toml")
    base = load_document(cfg_path)
    seed = resolve_seed(args.seed, base.get("seed", 0))
    cfg = load_synth_config(cfg_path, seed=seed, n_records=args.n_records)
    out = Path(args.out)
    write_dataset(generate_synthetic(cfg), out, args.format)
    write_manifest(out, "synth", configs={"synth": cfg_path}, outputs={"corpus": out}, seed=seed,
                   params={"n_records": cfg.n_records})
    return 0


def cmd_preprocess(args) -> int:
    ds = read_dataset(args.input)
    pre, cfgs = _preprocessor(args)
    out = Path(args.out)
    _write_tokens(out, ds.ids, pre.dataset(ds))
    write_manifest(out, "preprocess", inputs={"corpus": args.input}, configs=cfgs, outputs={"tokens": out})
    return 0


def cmd_dedup(args) -> int:
    ds = read_dataset(args.input)
    cfgs: dict[str, Any] = {}
    if args.tokens:
        tok = _read_tokens(args.tokens)
        try:
            docs = [tok[i] for i in ds.ids]
        except KeyError as exc:
            raise DataError(f"no tokens for record {exc.args[0]!r}") from None
    else:
        pre, cfgs = _preprocessor(args)
        docs = pre.dataset(ds)
    kept, drops = dedup(ds, docs, args.threshold, args.block_rows)
    out = Path(args.out)
    write_dataset(kept, out)
    outputs = {"corpus": out}
    if args.report:
        write_drop_report(drops, args.report)
        outputs["drops"] = Path(args.report)
    log.info("dedup kept %d of %d records", len(kept), len(ds))
    write_manifest(out, "dedup", inputs={"corpus": args.input, "tokens": args.tokens}, configs=cfgs,
                   outputs=outputs, params={"threshold": args.threshold, "kept": len(kept), "dropped": len(drops)})
    return 0


def cmd_label(args) -> int:
    ds = read_dataset(args.input)
    rules_path = _config_path(args.rules, "rules.sample.toml")
    labeled, coverage = label_dataset(ds, load_rules(rules_path), force=args.force)
    out = Path(args.out)
    write_dataset(labeled, out)
    outputs = {"corpus": out}
    if args.coverage:
        coverage.write(args.coverage)
        outputs["coverage"] = Path(args.coverage)
    log.info("labeled: %d of %d records unlabeled", coverage.unlabeled, coverage.total)
    write_manifest(out, "label", inputs={"corpus": args.input}, configs={"rules": rules_path}, outputs=outputs,
                   params={"force": args.force})
    return 0


def cmd_split(args) -> int:
    ds = read_dataset(args.input)
    seed = resolve_seed(args.seed, 0)
    tr, te = split(ds, args.fraction, seed)
    write_dataset(tr, args.train_out)
    write_dataset(te, args.test_out)
    write_manifest(Path(args.train_out), "split", inputs={"corpus": args.input},
                   outputs={"train": args.train_out, "test": args.test_out}, seed=seed,
                   params={"fraction": args.fraction})
    return 0


def _featurizer_spec(args, seed: int) -> tuple[FeaturizerSpec, Path | None]:
    doc = _spec_doc(args.featurizer_spec)
    kind = args.features or doc.pop("kind", "ngram-tfidf")
    doc.pop("kind", None)
    for key in ("max_n", "vector_size", "k", "pad_len"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return FeaturizerSpec(kind, doc, seed), (Path(args.featurizer_spec) if args.featurizer_spec else None)


def cmd_featurize(args) -> int:
    ds = read_dataset(args.train)
    seed = resolve_seed(args.seed, 1)
    spec, spec_path = _featurizer_spec(args, seed)
    pre, cfgs = _preprocessor(args)
    fz = fit_featurizer(spec, pre, ds)
    out = Path(args.out)
    fz.save(out)
    if fz.pca is not None:
        log.info("PCA keeps %d components, %.6f of variance", fz.pca.k, fz.pca.retained_variance)
    params = {"featurizer": spec.to_json(), "n_features": fz.n_features}
    if fz.pca is not None:
        params["pca_retained_variance"] = fz.pca.retained_variance
    write_manifest(out, "featurize", inputs={"train": args.train}, configs={**cfgs, "spec": spec_path},
                   outputs={"featurizer": out}, seed=seed, params=params)
    return 0


def cmd_train(args) -> int:
    ds = read_dataset(args.train)
    y = _labels(ds, "training set")
    seed = resolve_seed(args.seed, 0)
    configs: dict[str, Any] = {}
    inputs: dict[str, Any] = {"train": args.train}
    if args.featurizer:
        fz = Featurizer.load(args.featurizer)
        inputs["featurizer"] = args.featurizer
    else:
        spec, spec_path = _featurizer_spec(args, seed)
        pre, configs = _preprocessor(args)
        fz = fit_featurizer(spec, pre, ds)
        configs["featurizer_spec"] = spec_path
    x = fz.transform(ds)
    hp = _spec_doc(args.spec)
    hp.pop("kind", None)
    grid = hp.pop("grid", None)
    if args.class_weight:
        hp["class_weight"] = args.class_weight
    mspec = ModelSpec(args.model, hp, seed)
    configs["spec"] = Path(args.spec) if args.spec else None
    params: dict[str, Any] = {}
    if args.tune or grid is not None:
        mspec, cv = grid_search(x, y, mspec, grid or DEFAULT_SVM_GRID, args.folds)
        params["cv"] = cv.to_json()
    fz_blob = fz.to_bytes()
    model = train(x, y, mspec, featurizer_ref=artifacts.digest(fz_blob))
    out = Path(args.out)
    save_model(out, model, fz_blob)
    params["model"] = mspec.to_json()
    write_manifest(out, "train", inputs=inputs, configs=configs, outputs={"model": out}, seed=seed, params=params)
    return 0


def _load_bundle(path):
    model, blob = load_model(path)
    if blob is None:
        raise DataError(f"{path} carries no featurizer; train it with `trxcat train`")
    return model, Featurizer.from_bytes(blob)


def cmd_evaluate(args) -> int:
    model, fz = _load_bundle(args.model)
    ds = read_dataset(args.test)
    y = _labels(ds, "test set")
    if not y:
        raise DataError("test set is empty")
    pred = predict(model, fz.transform(ds))
    labels = sorted(set(model.labels) | set(y))
    rep = build_report(y, pred, labels, model=model.kind, featurizer=fz.spec.label, seed=model.spec.seed,
                       split={"test": Path(args.test).name, "test_sha256": file_sha256(args.test),
                              "n_test": len(y)})
    out = Path(args.report)
    rep.write(out)
    if args.table:
        Path(args.table).write_text(rep.per_category_table(), encoding="utf-8")
    print(f"weighted precision {rep.precision:.4f}  recall {rep.recall:.4f}  F1 {rep.f1:.4f}")
    write_manifest(out, "evaluate", inputs={"model": args.model, "test": args.test},
                   outputs={"report": out, "table": args.table}, seed=model.spec.seed)
    return 0


def cmd_predict(args) -> int:
    model, fz = _load_bundle(args.model)
    ds = read_dataset(args.input)
    out = Path(args.out)
    x = fz.transform(ds)
    labels = predict(model, x) if len(ds) else []
    if args.scores:
        scores = predict_scores(model, x) if len(ds) else np.zeros((0, len(model.labels)))
        with open(out, "w", encoding="utf-8") as fh:
            for tx, lab, row in zip(ds.records, labels, scores):
                doc = {**tx.to_json(), "category": lab,
                       "scores": {k: float(v) for k, v in zip(model.labels, row)}}
                fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
    else:
        out.write_bytes(dumps_jsonl(Dataset([replace(tx, category=lab) for tx, lab in zip(ds.records, labels)],
                                            frozenset(model.labels))))
    write_manifest(out, "predict", inputs={"model": args.model, "records": args.input}, outputs={"predictions": out},
                   seed=model.spec.seed, params={"n_records": len(ds)})
    return 0


def cmd_experiment(args) -> int:
    cfg_path = _config_path(args.config, "experiment.default.toml")
    cfg = load_pipeline_config(cfg_path, seed=args.seed)
    if args.fractions:
        cfg.fractions = args.fractions
    if args.seeds:
        cfg.seeds = args.seeds
    out = Path(args.out) if args.out else (cfg.out_dir or Path("results"))
    out.mkdir(parents=True, exist_ok=True)
    pre = cfg.preprocessor()
    prepared = prepare_corpus(cfg, pre)
    table = run_experiment(prepared.dataset, cfg, preprocessor=pre,
                           artifact_dir=out / "artifacts" if args.write_artifacts else None)
    (out / "experiment.json").write_text(json.dumps(table.to_json(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    text = render_tables(table, cfg)
    (out / "tables.txt").write_text(text, encoding="utf-8")
    if prepared.coverage is not None:
        prepared.coverage.write(out / "coverage.json")
    sys.stdout.write(text)
    outputs = {"experiment": out / "experiment.json", "tables": out / "tables.txt"}
    write_manifest(out, "experiment", configs=cfg.input_files(), outputs=outputs, seed=cfg.seed,
                   params={**config_summary(cfg), "records_raw": prepared.n_raw,
                           "records_used": len(prepared.dataset)})
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
    if "reports" in doc:
        table = ExperimentTable.from_json(doc)
        parts = []
        for fz in dict.fromkeys(r.featurizer for r in table.reports):
            parts.append(f"{fz}\n{table.by_fraction_table(fz)}\n")
        text = "".join(parts)
    else:
        rep = EvaluationReport.from_json(doc)
        text = (f"{rep.model} on {rep.featurizer}: weighted precision {100 * rep.precision:.1f}%, "
                f"recall {100 * rep.recall:.1f}%, F1 {100 * rep.f1:.1f}%\n\n" + rep.per_category_table(args.top))
        if rep.zero_division:
            text += f"\nundefined precision or recall (set to 0): {', '.join(rep.zero_division)}\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# parser


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must be strictly between 0 and 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trxcat", description="Bank transaction description classification pipeline.",
                epilog=f"Seed precedence: --seed flag, then ${SEED_ENV}, then the config file.")
    p.add_argument("--version", action="version", version=f"trxcat {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    s.add_argument("--config", metavar="TOML", help="synthetic corpus config (default: shipped)")
    s.add_argument("--out", required=True, help="output file (.jsonl or .csv)")
    s.add_argument("--n-records", type=int, help="override the record count")
    s.add_argument("--format", choices=("jsonl", "csv"), help="output format (default: from extension)")
    _seed_flag(s)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="clean and anonymize descriptions into token lists")
    s.add_argument("--in", dest="input", required=True, help="transactions (.jsonl or .csv)")
    s.add_argument("--out", required=True, help="output JSONL of {id, tokens}")
    _add_preprocess_flags(s)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("dedup", help="drop near-duplicate records by TF-IDF cosine similarity")
    s.add_argument("--in", dest="input", required=True, help="transactions")
    s.add_argument("--tokens", help="token file from `preprocess` (default: preprocess on the fly)")
    s.add_argument("--out", required=True, help="deduplicated transactions")
    s.add_argument("--report", help="JSONL of dropped ids with the kept id and cosine")
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help=f"cosine threshold in (0, 1] (default {DEFAULT_THRESHOLD})")
    s.add_argument("--block-rows", type=int, default=1024, help="rows per similarity block (default 1024)")
    _add_preprocess_flags(s)
    s.set_defaults(func=cmd_dedup)

    s = sub.add_parser("label", help="assign categories with keyword rules")
    s.add_argument("--in", dest="input", required=True, help="transactions")
    s.add_argument("--out", required=True, help="labeled transactions")
    s.add_argument("--rules", metavar="TOML", help="rule set (default: shipped)")
    s.add_argument("--report", "--coverage", dest="coverage", help="write a JSON coverage report here")
    s.add_argument("--force", action="store_true", help="relabel records that already have a category")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("split", help="stratified train/test split")
    s.add_argument("--in", dest="input", required=True, help="labeled transactions")
    s.add_argument("--fraction", type=_fraction, default=0.8, help="training fraction (default 0.8)")
    s.add_argument("--train-out", required=True, help="training records output")
    s.add_argument("--test-out", required=True, help="test records output")
    _seed_flag(s)
    s.set_defaults(func=cmd_split)

    def feature_flags(s, required_kind=False):
        s.add_argument("--features", choices=FEATURIZER_KINDS, required=required_kind,
                       help="featurizer kind (default ngram-tfidf)")
        s.add_argument("--featurizer-spec", metavar="TOML", help="featurizer options file")
        s.add_argument("--max-n", type=int, help="largest n-gram order (ngram-tfidf)")
        s.add_argument("--vector-size", type=int, choices=(100, 200, 300), help="embedding size (word2vec-pca)")
        s.add_argument("--k", type=int, help="PCA components (word2vec-pca)")
        s.add_argument("--pad-len", type=int, help="tokens per description after padding (word2vec-pca)")
        _add_preprocess_flags(s)

    s = sub.add_parser("featurize", help="fit a featurizer on training records")
    s.add_argument("--train", required=True, help="training transactions")
    s.add_argument("--out", required=True, help="featurizer artifact")
    feature_flags(s)
    _seed_flag(s)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="train a classifier (the artifact embeds its featurizer)")
    s.add_argument("--train", required=True, help="labeled training transactions")
    s.add_argument("--model", required=True, choices=KINDS, help="classifier kind")
    s.add_argument("--featurizer", help="fitted featurizer artifact (default: fit one on --train)")
    s.add_argument("--spec", metavar="TOML", help="hyperparameters; a `grid` table enables tuning")
    s.add_argument("--tune", action="store_true", help="grid-search hyperparameters (default SVM grid)")
    s.add_argument("--folds", type=int, default=3, help="cross-validation folds for tuning (default 3)")
    s.add_argument("--class-weight", choices=("balanced",), help="reweight classes by inverse frequency")
    s.add_argument("--out", required=True, help="model artifact")
    feature_flags(s)
    _seed_flag(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a model on labeled test records")
    s.add_argument("--model", required=True, help="model artifact")
    s.add_argument("--test", required=True, help="labeled test transactions")
    s.add_argument("--report", required=True, help="JSON report output")
    s.add_argument("--table", help="also write the per-category text table here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="categorize new transactions")
    s.add_argument("--model", required=True, help="model artifact")
    s.add_argument("--in", dest="input", required=True, help="transactions to categorize")
    s.add_argument("--out", required=True, help="JSONL with the predicted category filled in")
    s.add_argument("--scores", action="store_true", help="include per-class scores")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("experiment", help="run the train-fraction experiment grid")
    s.add_argument("--config", metavar="TOML", help="experiment config (default: shipped)")
    s.add_argument("--out", help="output directory (default: config out_dir or ./results)")
    s.add_argument("--fractions", type=_fraction, nargs="+", help="override train fractions")
    s.add_argument("--seeds", type=int, nargs="+", help="override the seed list")
    s.add_argument("--write-artifacts", action="store_true", help="keep every fitted featurizer and model")
    _seed_flag(s, "single seed replacing the configured list (overrides $TRXCAT_SEED)")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", help="render a JSON report or experiment result as text tables")
    s.add_argument("--in", dest="input", required=True, help="report.json or experiment.json")
    s.add_argument("--out", help="write here instead of stdout")
    s.add_argument("--top", type=int, help="show only the N largest categories")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ConfigError) as exc:
        print(f"trxcat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"trxcat {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
