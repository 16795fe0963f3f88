"""Dataset management: directory split/subsample, CSV loading, stratified splits.

Directory datasets use a flat one-level layout, ``data_dir/<class>/<file>``.
Files are always copied, never moved.
"""

from __future__ import annotations

import csv
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cascademl.errors import ValidationError
from cascademl.numerics import make_rng

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitPlan:
    classes: tuple[str, ...]
    assignments: dict  # class -> {"train": [...], "val": [...], "test": [...]}
    seed: int
    ratios: tuple[float, float, float]

    def counts(self) -> dict[str, dict[str, int]]:
        return {s: {c: len(self.assignments[c][s]) for c in self.classes} for s in SPLITS}


def _check_ratios(ratios) -> tuple[float, float, float]:
    r = tuple(float(x) for x in ratios)
    if len(r) != 3:
        raise ValidationError("expected three ratios (train, val, test)")
    if any(x < 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise ValidationError(
            f"ratios must be nonnegative and sum to 1, got train={r[0]} val={r[1]} test={r[2]}"
        )
    return r


def scan_classes(data_dir) -> dict[str, list[str]]:
    """Class name -> lexicographically sorted file names."""
    root = Path(data_dir)
    if not root.is_dir():
        raise ValidationError(f"data directory not found: {root}")
    classes = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = []
        for entry in sub.iterdir():
            if entry.is_dir():
                raise ValidationError(
                    f"nested directory {entry} inside class {sub.name}; a flat class layout is required"
                )
            files.append(entry.name)
        if not files:
            raise ValidationError(f"class directory {sub} is empty")
        classes[sub.name] = sorted(files)
    if not classes:
        raise ValidationError(f"no class subdirectories in {root}")
    return classes


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    """floor / floor / remainder allocation."""
    n_train = math.floor(ratios[0] * n)
    n_val = math.floor(ratios[1] * n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def _shuffled(names: list[str], rng: np.random.Generator) -> list[str]:
    items = list(names)
    rng.shuffle(items)
    return items


def plan_split(data_dir, ratios=(0.7, 0.15, 0.15), seed: int = 42) -> SplitPlan:
    ratios = _check_ratios(ratios)
    classes = scan_classes(data_dir)
    assignments = {}
    for name, files in classes.items():
        # one generator per class keeps a class's plan independent of its siblings
        rng = make_rng(seed)
        order = _shuffled(files, rng)
        n_tr, n_v, _ = split_counts(len(order), ratios)
        assignments[name] = {
            "train": order[:n_tr],
            "val": order[n_tr : n_tr + n_v],
            "test": order[n_tr + n_v :],
        }
    return SplitPlan(tuple(classes), assignments, int(seed), ratios)


def _prepare_destination(dest) -> Path:
    dest = Path(dest)
    if dest.exists():
        if not dest.is_dir():
            raise FileExistsError(f"destination exists and is not a directory: {dest}")
        if any(dest.iterdir()):
            raise FileExistsError(f"destination directory is not empty: {dest}")
    dest.mkdir(parents=True, exist_ok=True)
    return dest


def _copy(src: Path, dst: Path) -> None:
    try:
        shutil.copyfile(src, dst)
    except OSError as exc:
        raise OSError(f"cannot copy {src}: {exc.strerror or exc}") from exc


def execute_split(plan: SplitPlan, data_dir, destination_dir) -> dict[str, dict[str, int]]:
    src_root = Path(data_dir)
    dest = _prepare_destination(destination_dir)
    for split in SPLITS:
        for cls in plan.classes:
            target = dest / split / cls
            target.mkdir(parents=True, exist_ok=True)
            for name in plan.assignments[cls][split]:
                _copy(src_root / cls / name, target / name)
    return plan.counts()


class DatasetSplitter:
    """Stratified train/val/test splitter for class-per-directory datasets."""

    def __init__(self, data_dir, destination_dir, train_ratio=0.7, val_ratio=0.15, test_ratio=0.15, seed=42):
        self.data_dir = data_dir
        self.destination_dir = destination_dir
        self.ratios = (train_ratio, val_ratio, test_ratio)
        self.seed = seed

    def run(self):
        plan = plan_split(self.data_dir, self.ratios, self.seed)
        return execute_split(plan, self.data_dir, self.destination_dir)


def subsample_counts(n: int, fraction: float) -> int:
    return max(1, math.floor(fraction * n))


def subsample(data_dir, destination_dir, fraction: float = 0.5, seed: int = 42) -> dict[str, int]:
    """Copy a per-class random fraction of files, keeping the class layout."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    classes = scan_classes(data_dir)
    src_root = Path(data_dir)
    dest = _prepare_destination(destination_dir)
    counts = {}
    for name, files in classes.items():
        rng = make_rng(seed)
        keep = _shuffled(files, rng)[: subsample_counts(len(files), fraction)]
        (dest / name).mkdir()
        for f in keep:
            _copy(src_root / name / f, dest / name / f)
        counts[name] = len(keep)
    return counts


class DataSubSampler:
    def __init__(self, data_dir, destination_dir, fraction=0.5, seed=42):
        self.data_dir = data_dir
        self.destination_dir = destination_dir
        self.fraction = fraction
        self.seed = seed

    def create_miniature_dataset(self):
        return subsample(self.data_dir, self.destination_dir, self.fraction, self.seed)


# --- tabular ---------------------------------------------------------------


@dataclass
class TabularDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValidationError("label count does not match row count")
        if self.X.shape[1] != len(self.feature_names):
            raise ValidationError("feature name count does not match column count")

    def subset(self, idx) -> "TabularDataset":
        idx = np.asarray(idx, dtype=int)
        return TabularDataset(self.X[idx], self.y[idx], list(self.feature_names), list(self.class_names))


def load_csv(path, label_column: str) -> TabularDataset:
    """Read a headed CSV; labels become dense integers in first-appearance order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file (header required)")
    header, body = rows[0], [r for r in rows[1:] if r]
    if label_column not in header:
        raise ValidationError(f"{path}: label column {label_column!r} not in header")
    if not body:
        raise ValidationError(f"{path}: no data rows")
    li = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != li]
    if not feature_names:
        raise ValidationError(f"{path}: no feature columns")
    X = np.empty((len(body), len(feature_names)))
    mapping: dict[str, int] = {}
    y = np.empty(len(body), dtype=int)
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        label = row[li]
        y[r - 2] = mapping.setdefault(label, len(mapping))
        c = 0
        for i, cell in enumerate(row):
            if i == li:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {header[i]!r}"
                ) from None
            if not math.isfinite(value):
                raise ValidationError(f"{path}: non-finite value at row {r}, column {header[i]!r}")
            X[r - 2, c] = value
            c += 1
    return TabularDataset(X, y, feature_names, list(mapping))


def write_csv(path, X, feature_names, labels=None, label_column: str | None = None) -> None:
    """Write numeric columns with ``repr`` precision, optionally appending a label column."""
    X = np.asarray(X, dtype=np.float64)
    header = list(feature_names)
    if labels is not None:
        header.append(label_column or "label")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(X):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(labels[i]))
            w.writerow(cells)


def stratified_split(ds: TabularDataset, test_fraction: float = 0.2, seed: int = 42):
    """Per class, ``floor(test_fraction * n_c)`` rows go to test after a seeded shuffle."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = make_rng(seed)
    order = rng.permutation(ds.X.shape[0])
    test_mask = np.zeros(ds.X.shape[0], dtype=bool)
    for c in np.unique(ds.y):
        members = order[ds.y[order] == c]
        n_test = math.floor(test_fraction * members.size)
        test_mask[members[:n_test]] = True
    train_idx = order[~test_mask[order]]
    test_idx = order[test_mask[order]]
    return ds.subset(train_idx), ds.subset(test_idx)
