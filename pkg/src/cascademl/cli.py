"""Batch command-line interface.

Exit codes: 0 success, 1 I/O error, 2 validation/config error,
3 no features survive selection, 4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from cascademl import datatools, feature_select, report
from cascademl.errors import DivergenceError, NoFeaturesError, ValidationError
from cascademl.neuralnet import DenseNetwork, LayerSpec, TrainConfig, TrainingHistory, predict_classes
from cascademl.pccdnas import Scaler, SearchConfig, build, data_init

SCHEMA_VERSION = 1

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NO_FEATURES, EXIT_DIVERGENCE = 0, 1, 2, 3, 4


@dataclass
class SearchSection:
    layers: int = 3
    pca_variance: float | list = 0.95
    normalize: bool = True
    unit: bool = True
    activation: str = "relu"
    dropout: float = 0.0
    batch_norm: bool = False
    l2: float = 0.0
    kernel_initializer: str = "he_normal"
    output_neurons: int = 1
    out_activation: str = "sigmoid"


@dataclass
class TrainSection:
    epochs: int = 10
    batch_size: int = 32
    loss: str = "binary_crossentropy"
    optimizer: str = "adam"
    learn_rate: float = 0.001
    stop_criteria: str = "val_loss"
    es_mode: str = "min"
    es_patience: int = 5
    metrics: list = field(default_factory=lambda: ["accuracy"])
    verbose: int = 0


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int | None = None
    val_fraction: float = 0.2
    selectors: list = field(default_factory=list)
    search: SearchSection = field(default_factory=SearchSection)
    train: TrainSection = field(default_factory=TrainSection)

    def selector_specs(self) -> list[feature_select.SelectorSpec]:
        return [feature_select.SelectorSpec.from_dict(d) for d in self.selectors]

    def search_config(self) -> SearchConfig:
        if self.seed is None:
            raise ValidationError("seed is required (config 'seed' or --seed)")
        s, t = self.search, self.train
        train_cfg = TrainConfig(seed=self.seed, **{f.name: getattr(t, f.name) for f in fields(t)})
        template = LayerSpec(1, s.activation, s.dropout, s.batch_norm, s.l2, s.kernel_initializer)
        return SearchConfig(
            layers=s.layers,
            pca_variance=s.pca_variance,
            normalize=s.normalize,
            unit=s.unit,
            train=train_cfg,
            layer_template=template,
            output_neurons=s.output_neurons,
            out_activation=s.out_activation,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _section(cls, doc, where):
    if not isinstance(doc, dict):
        raise ValidationError(f"config section {where!r} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValidationError(f"unknown keys in {where!r}: {sorted(unknown)}")
    return cls(**doc)


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
    cfg = RunConfig(
        schema_version=version,
        seed=doc.get("seed"),
        val_fraction=doc.get("val_fraction", 0.2),
        selectors=list(doc.get("selectors", [])),
        search=_section(SearchSection, doc.get("search", {}), "search"),
        train=_section(TrainSection, doc.get("train", {}), "train"),
    )
    cfg.selector_specs()  # validate eagerly
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    try:
        return parse_config(doc)
    except TypeError as exc:
        raise ValidationError(f"invalid config value: {exc}") from None


def _print_table(counts: dict[str, dict[str, int]]) -> None:
    splits = list(counts)
    classes = sorted({c for s in counts.values() for c in s})
    w = max([5] + [len(c) for c in classes])
    print("class".ljust(w) + "".join(s.rjust(8) for s in splits))
    for c in classes:
        print(c.ljust(w) + "".join(str(counts[s].get(c, 0)).rjust(8) for s in splits))


# --- commands --------------------------------------------------------------


def cmd_split(args) -> int:
    plan = datatools.plan_split(args.data_dir, (args.train, args.val, args.test), args.seed)
    counts = datatools.execute_split(plan, args.data_dir, args.dest)
    _print_table(counts)
    return EXIT_OK


def cmd_subsample(args) -> int:
    if not 0.0 < args.fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {args.fraction}")
    counts = datatools.subsample(args.data_dir, args.dest, args.fraction, args.seed)
    _print_table({"kept": counts})
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = load_config(args.config)
    specs = cfg.selector_specs()
    ds = datatools.load_csv(args.inp, args.label)
    if specs:
        sel = feature_select.fit_chained(ds.X, ds.y, specs)
        kept = list(sel.selected)
    else:
        kept = list(range(len(ds.feature_names)))
    kept_names = {ds.feature_names[i] for i in kept}
    with open(args.inp, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h == args.label or h in kept_names]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow([r[i] for i in cols])
    print("index\tfeature")
    for i in kept:
        print(f"{i}\t{ds.feature_names[i]}")
    return EXIT_OK


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.layers is not None:
        cfg.search.layers = args.layers
    if args.pca_variance is not None:
        try:
            values = [float(v) for v in args.pca_variance.split(",")]
        except ValueError:
            raise ValidationError(f"--pca-variance must be numbers, got {args.pca_variance!r}") from None
        cfg.search.pca_variance = values[0] if len(values) == 1 else values
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.learn_rate is not None:
        cfg.train.learn_rate = args.learn_rate
    if args.batch_size is not None:
        cfg.train.batch_size = args.batch_size
    if args.verbose:
        cfg.train.verbose = 1
    return cfg


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_nas(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    try:
        search = cfg.search_config()
    except TypeError as exc:
        raise ValidationError(f"invalid config value: {exc}") from None
    ds = datatools.load_csv(args.train, args.label)
    if args.val is not None:
        val = datatools.load_csv(args.val, args.label)
        if val.feature_names != ds.feature_names:
            raise ValidationError("validation CSV columns differ from training CSV")
        # map validation labels onto the training label indices by name
        lookup = {name: i for i, name in enumerate(ds.class_names)}
        missing = set(val.class_names) - set(lookup)
        if missing:
            raise ValidationError(f"validation labels not seen in training: {sorted(missing)}")
        val.y = np.array([lookup[val.class_names[i]] for i in val.y], dtype=int)
        val.class_names = list(ds.class_names)
        train_ds = ds
    else:
        train_ds, val = datatools.stratified_split(ds, cfg.val_fraction, cfg.seed)
    n_classes = len(ds.class_names)
    if search.output_neurons == 1 and n_classes > 2:
        raise ValidationError(f"{n_classes} classes need output_neurons = {n_classes}")
    if search.output_neurons > 1 and n_classes > search.output_neurons:
        raise ValidationError(f"{n_classes} classes exceed output_neurons = {search.output_neurons}")
    has_val = val.X.shape[0] > 0
    data = data_init(
        train_ds.X, train_ds.y,
        val.X if has_val else None, val.y if has_val else None,
        search.normalize, search.unit,
    )
    out_dir = Path(args.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = build(search, data)
    model = result.model
    model.meta = {
        "class_names": list(ds.class_names),
        "feature_names": list(ds.feature_names),
        "label_column": args.label,
        "scaler": data.scaler.to_dict(),
        "widths": list(result.widths),
    }
    model.save(args.out_model)

    (out_dir / "widths.tsv").write_text(result.widths_table(), encoding="utf-8")
    (out_dir / "variance_curves.tsv").write_text(result.variance_table(), encoding="utf-8")
    user_metric = "accuracy" if "accuracy" in search.train.metrics else None
    for i, stage in enumerate(result.per_stage, start=1):
        hist = stage.history
        _json_dump(hist.to_dict(), out_dir / f"history_stage{i}.json")
        svg = report.render_history(hist, report.PlotSpec(True, user_metric, f"Stage {i} training"))
        (out_dir / f"history_stage{i}.svg").write_text(svg, encoding="utf-8")
    _json_dump(result.final_history.to_dict(), out_dir / "history.json")

    summary = {"widths": list(result.widths)}
    if has_val:
        pred = predict_classes(model, data.X_val)
        summary["val_accuracy"] = float(np.mean(pred == data.y_val))
    _json_dump(summary, out_dir / "summary.json")
    print("layer\twidth")
    for i, w in enumerate(result.widths, start=1):
        print(f"{i}\t{w}")
    if has_val:
        print(f"val_accuracy\t{summary['val_accuracy']!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    model = DenseNetwork.load(args.model)
    meta = model.meta
    ds = datatools.load_csv(args.data, args.label)
    if ds.X.shape[1] != model.input_dim:
        raise ValidationError(
            f"model expects {model.input_dim} features, data has {ds.X.shape[1]}"
        )
    class_names = list(meta.get("class_names") or [str(i) for i in range(max(model.output_dim, 2))])
    lookup = {name: i for i, name in enumerate(class_names)}
    unknown = set(ds.class_names) - set(lookup)
    if unknown:
        raise ValidationError(f"labels not known to the model: {sorted(unknown)}")
    y = np.array([lookup[ds.class_names[i]] for i in ds.y], dtype=int)
    X = Scaler.from_dict(meta["scaler"]).apply(ds.X) if "scaler" in meta else ds.X
    pred = predict_classes(model, X)
    cm = report.confusion_matrix(y, pred, class_names)
    title = args.title or Path(args.data).stem
    svg, text = report.render_confusion(cm, title)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "confusion.svg").write_text(svg, encoding="utf-8")
    (out_dir / "confusion.txt").write_text(text, encoding="utf-8")
    if args.history is not None:
        hist = TrainingHistory.from_dict(json.loads(Path(args.history).read_text(encoding="utf-8")))
        metric = args.user_metric
        if metric is None and "accuracy" in hist.keys:
            metric = "accuracy"
        svg = report.render_history(hist, report.PlotSpec(True, metric, "Training history"))
        (out_dir / "history.svg").write_text(svg, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cascademl", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="stratified train/val/test split of a class-per-directory dataset", formatter_class=fmt)
    p.add_argument("--data-dir", required=True, help="source dataset root")
    p.add_argument("--dest", required=True, help="destination root (must be empty or absent)")
    p.add_argument("--train", type=float, default=0.7, help="train ratio")
    p.add_argument("--val", type=float, default=0.15, help="validation ratio")
    p.add_argument("--test", type=float, default=0.15, help="test ratio")
    p.add_argument("--seed", type=int, required=True, help="shuffle seed")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("subsample", help="copy a per-class fraction of a dataset", formatter_class=fmt)
    p.add_argument("--data-dir", required=True, help="source dataset root")
    p.add_argument("--dest", required=True, help="destination root (must be empty or absent)")
    p.add_argument("--fraction", type=float, default=0.5, help="fraction of files kept per class")
    p.add_argument("--seed", type=int, required=True, help="shuffle seed")
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("select", help="apply a configured feature-selection chain to a CSV", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, help="input CSV")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--config", default=None, help="JSON config with a 'selectors' list")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("nas", help="PCA-cascade architecture search and training", formatter_class=fmt)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--val", default=None, help="validation CSV; when omitted, a stratified val_fraction split of --train is used")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--out-model", required=True, help="output .cmnet model path")
    p.add_argument("--report-dir", required=True, help="directory for tables and plots")
    p.add_argument("--seed", type=int, default=None, help="overrides config seed")
    p.add_argument("--layers", type=int, default=None, help="overrides search.layers")
    p.add_argument("--pca-variance", default=None, help="threshold or comma list; overrides search.pca_variance")
    p.add_argument("--epochs", type=int, default=None, help="overrides train.epochs")
    p.add_argument("--learn-rate", type=float, default=None, help="overrides train.learn_rate")
    p.add_argument("--batch-size", type=int, default=None, help="overrides train.batch_size")
    p.add_argument("--verbose", action="store_true", help="log per-epoch metrics")
    p.set_defaults(func=cmd_nas)

    p = sub.add_parser("report", help="confusion matrix and training curves for a saved model", formatter_class=fmt)
    p.add_argument("--model", required=True, help=".cmnet model path")
    p.add_argument("--data", required=True, help="labelled CSV")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--history", default=None, help="history JSON written by 'nas'")
    p.add_argument("--user-metric", default=None, help="metric for the second history panel")
    p.add_argument("--title", default=None, help="confusion plot title; the data file stem when omitted")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFeaturesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_FEATURES
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
