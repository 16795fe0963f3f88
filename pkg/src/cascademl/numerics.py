"""Matrix validation, descriptive statistics, seeded RNG and PCA.

Matrices are plain 2-D ``float64`` numpy arrays (samples x features).
``as_matrix`` is the single gate that enforces shape and finiteness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cascademl.errors import ValidationError

# relative cutoff below which singular values count as zero rank
RANK_TOL = 1e-12


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array with at least one row and column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite entries")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator. PCG64 produces the same bit stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def column_variance(X) -> np.ndarray:
    """Population variance (divide by n) of every column."""
    X = as_matrix(X)
    centered = X - X.mean(axis=0)
    var = (centered**2).mean(axis=0)
    # the mean of identical values can round away from them; force exact zero
    var[X.max(axis=0) == X.min(axis=0)] = 0.0
    return var


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile on ``(n - 1)``-scaled positions."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("empty sample")
    if not np.all(np.isfinite(v)):
        raise ValidationError("percentile input contains NaN or infinite entries")
    if not 0.0 <= p <= 100.0:
        raise ValidationError(f"percentile must be in [0, 100], got {p}")
    v = np.sort(v)
    pos = p / 100.0 * (v.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, v.size - 1)
    frac = pos - lo
    return float(v[lo] + frac * (v[hi] - v[lo]))


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    singular_values: np.ndarray
    n_samples: int

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance(self) -> np.ndarray:
        """Covariance eigenvalues, i.e. ``s**2 / (rows - 1)``."""
        return self.singular_values**2 / (self.n_samples - 1)


def fit_pca(X) -> PCAModel:
    """Fit PCA by SVD of the column-centred data.

    Components with singular value below ``RANK_TOL * s_max`` are dropped, so
    the component count is the numerical rank capped at ``min(rows - 1, cols)``.
    Each component's largest-magnitude entry is made nonnegative.
    """
    X = as_matrix(X)
    n, d = X.shape
    if n < 2:
        raise ValidationError("insufficient samples for PCA")
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    keep = min(n - 1, d)
    s, vt = s[:keep], vt[:keep]
    if s.size == 0 or s[0] <= 0.0:
        s, vt = s[:0], vt[:0]
    else:
        mask = s >= RANK_TOL * s[0]
        s, vt = s[mask], vt[mask]
    vt = vt.copy()
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
    power = s**2
    total = power.sum()
    ratio = power / total if total > 0 else power
    return PCAModel(
        mean=mean,
        components=vt,
        explained_variance_ratio=ratio,
        singular_values=s,
        n_samples=n,
    )


def n_components_for_variance(model: PCAModel, threshold: float) -> int:
    """Smallest component count whose cumulative explained variance reaches ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"variance threshold out of range: {threshold}")
    if model.n_components == 0:
        raise ValidationError("PCA model has no components (zero-variance data)")
    cumulative = np.cumsum(model.explained_variance_ratio)
    hits = np.nonzero(cumulative >= threshold - 1e-12)[0]
    k = int(hits[0]) + 1 if hits.size else model.n_components
    return max(1, min(k, model.n_components))


def transform_pca(model: PCAModel, X, k: int | None = None) -> np.ndarray:
    """Project ``X - mean`` onto the first ``k`` components."""
    X = as_matrix(X)
    if k is None:
        k = model.n_components
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"dimension mismatch: model has {model.n_features} features, X has {X.shape[1]}"
        )
    if not 1 <= k <= model.n_components:
        raise ValidationError(f"k must be in [1, {model.n_components}], got {k}")
    return (X - model.mean) @ model.components[:k].T


def inverse_transform_pca(model: PCAModel, Z) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    k = Z.shape[1]
    return Z @ model.components[:k] + model.mean
