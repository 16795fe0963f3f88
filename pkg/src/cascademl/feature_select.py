"""Feature selectors sharing one fit/transform contract.

Every ``fit_*`` function returns a :class:`FeatureSelection` whose ``selected``
indices always refer to columns of the matrix the selection was fitted on,
and for chains, to columns of the original input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from cascademl.errors import NoFeaturesError, ValidationError
from cascademl.numerics import as_matrix, column_variance, percentile

# score assigned when within-class variance is zero but class means differ
F_SENTINEL = 1e12

SCORE_FUNCTIONS = ("f_classif", "mutual_info")
KINDS = ("variance_threshold", "adaptive_variance", "select_k_best", "rank_aggregated")


@dataclass(frozen=True)
class FeatureSelection:
    input_dim: int
    selected: tuple[int, ...]
    scores: np.ndarray | None = None
    threshold: float | None = None

    def __post_init__(self):
        sel = tuple(int(i) for i in self.selected)
        object.__setattr__(self, "selected", sel)
        if self.input_dim < 1:
            raise ValidationError("input_dim must be positive")
        if any(b <= a for a, b in zip(sel, sel[1:])):
            raise ValidationError(f"selected indices must be strictly increasing, got {list(sel)}")
        if sel and (sel[0] < 0 or sel[-1] >= self.input_dim):
            raise ValidationError(f"selected indices out of range for input_dim {self.input_dim}")
        if self.scores is not None and len(self.scores) != self.input_dim:
            raise ValidationError("scores length must equal input_dim")

    @property
    def n_selected(self) -> int:
        return len(self.selected)


@dataclass(frozen=True)
class SelectorSpec:
    """Declarative description of one selector.

    ``rank_aggregated`` nests further specs in ``methods`` so the mixed
    AVT -> RAFS pipeline can be expressed as a chain of specs.
    """

    kind: str
    threshold: float | None = None
    percentile: float | None = None
    k: int | None = None
    score_fn: str | None = None
    methods: tuple["SelectorSpec", ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.kind not in KINDS:
            raise ValidationError(f"unknown selector kind {self.kind!r}; expected one of {KINDS}")
        populated = {
            name
            for name in ("threshold", "percentile", "k", "score_fn")
            if getattr(self, name) is not None
        }
        if self.methods:
            populated.add("methods")
        required = {
            "variance_threshold": {"threshold"},
            "adaptive_variance": {"percentile"},
            "select_k_best": {"k", "score_fn"},
            "rank_aggregated": {"k", "methods"},
        }[self.kind]
        if populated != required:
            raise ValidationError(
                f"{self.kind} selector takes exactly {sorted(required)}, got {sorted(populated)}"
            )
        if self.threshold is not None and self.threshold < 0:
            raise ValidationError("threshold must be >= 0")
        if self.percentile is not None and not 0 <= self.percentile <= 100:
            raise ValidationError("percentile must be in [0, 100]")
        if self.k is not None and (int(self.k) != self.k or self.k < 1):
            raise ValidationError(f"k must be a positive integer, got {self.k}")
        if self.score_fn is not None and self.score_fn not in SCORE_FUNCTIONS:
            raise ValidationError(f"unknown score_fn {self.score_fn!r}")

    @property
    def exposes_scores(self) -> bool:
        return self.kind == "select_k_best"

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        for name in ("threshold", "percentile", "k", "score_fn"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.methods:
            out["methods"] = [m.to_dict() for m in self.methods]
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "SelectorSpec":
        if not isinstance(doc, dict):
            raise ValidationError(f"selector entry must be a mapping, got {type(doc).__name__}")
        allowed = {"kind", "threshold", "percentile", "k", "score_fn", "methods"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValidationError(f"unknown selector keys: {sorted(unknown)}")
        if "kind" not in doc:
            raise ValidationError("selector entry missing 'kind'")
        kwargs = {k: v for k, v in doc.items() if k != "methods"}
        methods = tuple(cls.from_dict(m) for m in doc.get("methods", ()))
        return cls(methods=methods, **kwargs)


def _labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.shape[0] != n_rows:
        raise ValidationError(f"label count {y.shape[0]} does not match row count {n_rows}")
    if np.unique(y).size < 2:
        raise ValidationError("scoring requires >=2 classes")
    return y


def fit_variance_threshold(X, threshold: float = 0.0) -> FeatureSelection:
    if threshold < 0:
        raise ValidationError("threshold must be >= 0")
    X = as_matrix(X)
    var = column_variance(X)
    selected = np.nonzero(var > threshold)[0]
    return FeatureSelection(X.shape[1], tuple(selected), threshold=float(threshold))


def fit_adaptive_variance(X, percentile_: float) -> FeatureSelection:
    """Drop features whose variance is strictly below the given percentile of all variances."""
    X = as_matrix(X)
    var = column_variance(X)
    t = percentile(var, percentile_)
    selected = np.nonzero(var >= t)[0]
    return FeatureSelection(X.shape[1], tuple(selected), threshold=t)


def score_f_classif(X, y) -> np.ndarray:
    """One-way ANOVA F statistic of every feature against class labels."""
    X = as_matrix(X)
    try:
        y = _labels(y, X.shape[0])
    except ValidationError as exc:
        if "classes" in str(exc):
            raise ValidationError("f_classif requires >=2 classes") from None
        raise
    classes = np.unique(y)
    n, g = X.shape[0], classes.size
    grand = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        between += Xc.shape[0] * (mc - grand) ** 2
        within += ((Xc - mc) ** 2).sum(axis=0)
    ms_between = between / (g - 1)
    df_within = n - g
    scores = np.zeros(X.shape[1])
    # relative guards: sums of squares at rounding level count as zero
    scale = np.maximum(((X - grand) ** 2).sum(axis=0), 1e-300)
    zero_between = between <= 1e-24 * scale
    zero_within = (within <= 1e-24 * scale) | (df_within <= 0)
    ok = ~zero_between & ~zero_within
    scores[ok] = ms_between[ok] / (within[ok] / df_within)
    scores[~zero_between & zero_within] = F_SENTINEL
    return scores


def score_mutual_info(X, y, bins: int = 10) -> np.ndarray:
    """Plug-in mutual information (nats) between equal-width-binned features and labels."""
    if bins < 1:
        raise ValidationError("bins must be positive")
    X = as_matrix(X)
    y = _labels(y, X.shape[0])
    _, y_idx = np.unique(y, return_inverse=True)
    n_classes = int(y_idx.max()) + 1
    n = X.shape[0]
    py = np.bincount(y_idx, minlength=n_classes) / n
    scores = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        lo, hi = col.min(), col.max()
        if hi <= lo:
            continue
        b = np.floor((col - lo) / (hi - lo) * bins).astype(int)
        b = np.clip(b, 0, bins - 1)
        joint = np.zeros((bins, n_classes))
        np.add.at(joint, (b, y_idx), 1.0)
        joint /= n
        px = joint.sum(axis=1)
        nz = joint > 0
        outer = np.outer(px, py)
        scores[j] = max(float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz]))), 0.0)
    return scores


def compute_scores(X, y, score_fn: str) -> np.ndarray:
    if score_fn == "f_classif":
        return score_f_classif(X, y)
    if score_fn == "mutual_info":
        return score_mutual_info(X, y)
    raise ValidationError(f"unknown score_fn {score_fn!r}")


def _top_k(order_key: np.ndarray, k: int) -> tuple[int, ...]:
    # ascending key, ties toward lower index (stable sort)
    idx = np.argsort(order_key, kind="stable")[:k]
    return tuple(sorted(int(i) for i in idx))


def select_top_k(scores, k: int) -> tuple[int, ...]:
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= k <= scores.size:
        raise ValidationError(f"k exceeds feature count ({k} > {scores.size})" if k > scores.size else "k must be >= 1")
    return _top_k(-scores, k)


def fit_select_k_best(X, y, score_fn: str, k: int) -> FeatureSelection:
    X = as_matrix(X)
    if k > X.shape[1]:
        raise ValidationError(f"k exceeds feature count ({k} > {X.shape[1]})")
    scores = compute_scores(X, y, score_fn)
    return FeatureSelection(X.shape[1], select_top_k(scores, k), scores=scores)


def descending_ranks(scores) -> np.ndarray:
    """Rank 1 = highest score; tied scores share the mean of the ranks they span."""
    return rankdata(-np.asarray(scores, dtype=np.float64), method="average")


def aggregate_rank_selection(score_vectors: Sequence[np.ndarray], k: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Mean rank across score vectors and the ``k`` best features by that mean."""
    if not score_vectors:
        raise ValidationError("rank aggregation needs at least one method")
    ranks = np.vstack([descending_ranks(s) for s in score_vectors])
    mean_rank = ranks.mean(axis=0)
    if not 1 <= k <= mean_rank.size:
        raise ValidationError(f"k exceeds feature count ({k} > {mean_rank.size})")
    return mean_rank, _top_k(mean_rank, k)


def fit_rank_aggregated(X, y, methods: Sequence[SelectorSpec], k: int) -> FeatureSelection:
    X = as_matrix(X)
    if not methods:
        raise ValidationError("rank aggregation needs at least one method")
    if k > X.shape[1]:
        raise ValidationError(f"k exceeds feature count ({k} > {X.shape[1]})")
    score_vectors = []
    for m in methods:
        if not m.exposes_scores:
            raise ValidationError(f"method does not expose scores: {m.kind}")
        score_vectors.append(compute_scores(X, y, m.score_fn))
    mean_rank, selected = aggregate_rank_selection(score_vectors, k)
    # stored scores are negated mean ranks so "higher is better" holds
    return FeatureSelection(X.shape[1], selected, scores=-mean_rank)


def fit_spec(spec: SelectorSpec, X, y=None) -> FeatureSelection:
    if spec.kind == "variance_threshold":
        return fit_variance_threshold(X, spec.threshold)
    if spec.kind == "adaptive_variance":
        return fit_adaptive_variance(X, spec.percentile)
    if y is None:
        raise ValidationError(f"{spec.kind} selector needs labels")
    if spec.kind == "select_k_best":
        return fit_select_k_best(X, y, spec.score_fn, spec.k)
    return fit_rank_aggregated(X, y, spec.methods, spec.k)


def transform(sel: FeatureSelection, X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != sel.input_dim:
        raise ValidationError(
            f"fitted on different width: expected {sel.input_dim} columns, got {X.shape[1]}"
        )
    if not sel.selected:
        raise NoFeaturesError("no features survive")
    return X[:, list(sel.selected)]


def fit_chained(X, y, specs: Sequence[SelectorSpec]) -> FeatureSelection:
    """Fit each spec on the previous stage's output; report original column indices."""
    if not specs:
        raise ValidationError("chain needs at least one selector")
    X = as_matrix(X)
    current = X
    index_map = np.arange(X.shape[1])
    last = None
    for stage, spec in enumerate(specs, start=1):
        last = fit_spec(spec, current, y)
        if not last.selected:
            raise NoFeaturesError(f"no features survive chain stage {stage} ({spec.kind})")
        current = current[:, list(last.selected)]
        index_map = index_map[list(last.selected)]
    scores = None
    if last is not None and last.scores is not None and len(specs) == 1:
        scores = last.scores
    return FeatureSelection(X.shape[1], tuple(index_map), scores=scores, threshold=last.threshold)


def fit_transform(spec_or_specs, X, y=None) -> tuple[FeatureSelection, np.ndarray]:
    specs = [spec_or_specs] if isinstance(spec_or_specs, SelectorSpec) else list(spec_or_specs)
    sel = fit_chained(X, y, specs)
    return sel, transform(sel, X)
