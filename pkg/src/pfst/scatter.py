"""Class statistics, scatter matrices and the trace criterion, evaluated directly.

Nothing in here is incremental; these functions are the reference against
which the cached update paths in :mod:`pfst.incremental` are tested.
No explicit matrix inverse is formed, only factorizations and solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidDataset, RankDeficient, SingularScatter

DEFAULT_SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable observation table with integer class labels.

    Parameters
    ----------
    features : ndarray of shape (n, p)
        Real-valued observations, one row per sample.
    labels : ndarray of shape (n,)
        Dense class ids ``0..C-1``.
    names : tuple of str
        One identifier per feature column.
    class_names : tuple of str, optional
        Original label values, indexed by class id.
    constant_columns : tuple of int
        Columns flagged as zero-variance by :func:`pfst.io.standardize`.
    """

    features: np.ndarray
    labels: np.ndarray
    names: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ()
    constant_columns: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise InvalidDataset(f"features must be 2-D, got shape {X.shape}")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidDataset("labels must be a vector with one entry per row")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidDataset("labels must be integer class ids")
        y = y.astype(np.int64, copy=True)
        if X.shape[0] == 0:
            raise InvalidDataset("dataset has no rows")
        if not np.all(np.isfinite(X)):
            raise InvalidDataset("features contain missing or non-finite values")
        if y.min() < 0:
            raise InvalidDataset("class ids must be non-negative")
        if len(self.class_names):
            class_names = tuple(str(c) for c in self.class_names)
            if y.max() >= len(class_names):
                raise InvalidDataset(f"class id {y.max()} has no name ({len(class_names)} classes)")
        else:
            present = np.unique(y)
            if not np.array_equal(present, np.arange(present.size)):
                raise InvalidDataset(f"class ids must be dense 0..C-1, got {present.tolist()}")
            class_names = tuple(str(c) for c in present)
        names = tuple(str(s) for s in self.names) if len(self.names) else tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise InvalidDataset(f"{len(names)} names for {X.shape[1]} features")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "class_names", class_names)
        object.__setattr__(self, "constant_columns", tuple(int(j) for j in self.constant_columns))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def column(self, j: int) -> np.ndarray:
        return self.features[:, j]

    def with_features(self, features: np.ndarray, **changes) -> "Dataset":
        """Copy of this dataset with a replacement feature table."""
        kwargs = dict(labels=self.labels, names=self.names, class_names=self.class_names,
                      constant_columns=self.constant_columns)
        kwargs.update(changes)
        return Dataset(features, **kwargs)

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset; class ids and names are kept even if a class ends up absent."""
        return Dataset(self.features[rows], self.labels[rows], self.names, self.class_names)


@dataclass(frozen=True, eq=False)
class ClassStats:
    counts: np.ndarray  # (C,)
    class_means: np.ndarray  # (C, p)
    overall_mean: np.ndarray  # (p,)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


def check_subset(subset: Sequence[int], p: int) -> np.ndarray:
    """Validate a feature subset and return it as an index array."""
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("feature subset must be a non-empty sequence of column indices")
    if idx.min() < 0 or idx.max() >= p:
        raise IndexError(f"feature index out of range [0, {p})")
    if np.unique(idx).size != idx.size:
        raise ValueError("feature subset contains duplicates")
    return idx


def compute_class_stats(data: Dataset) -> ClassStats:
    """Per-class counts and means plus the overall mean.

    Raises
    ------
    InvalidDataset
        If any class has fewer than two observations.
    """
    C = data.n_classes
    counts = np.bincount(data.labels, minlength=C)
    small = np.flatnonzero(counts < 2)
    if small.size:
        raise InvalidDataset(
            f"classes {[data.class_names[c] for c in small]} have fewer than 2 observations")
    class_means = np.stack([data.features[data.labels == c].mean(axis=0) for c in range(C)])
    overall_mean = data.features.mean(axis=0)
    for arr in (counts, class_means, overall_mean):
        arr.setflags(write=False)
    return ClassStats(counts, class_means, overall_mean)


def class_deviations(data: Dataset, stats: ClassStats, subset: Sequence[int] | None = None) -> np.ndarray:
    """Each observation minus its own class mean, restricted to ``subset``."""
    if subset is None:
        return data.features - stats.class_means[data.labels]
    idx = np.asarray(subset, dtype=np.int64)
    return data.features[:, idx] - stats.class_means[data.labels][:, idx]


def between_scatter(data: Dataset, stats: ClassStats, subset: Sequence[int]) -> np.ndarray:
    idx = check_subset(subset, data.p)
    D = stats.class_means[:, idx] - stats.overall_mean[idx]
    Sb = (D * stats.counts[:, None]).T @ D
    return (Sb + Sb.T) / 2


def within_scatter(data: Dataset, stats: ClassStats, subset: Sequence[int]) -> np.ndarray:
    idx = check_subset(subset, data.p)
    Z = class_deviations(data, stats, idx)
    Sw = Z.T @ Z
    return (Sw + Sw.T) / 2


def factor_scatter(Sw: np.ndarray, tol: float = DEFAULT_SINGULAR_TOL):
    """Cholesky-factor a scatter matrix, rejecting it when it is numerically singular.

    The pivots of the factorization are the squared diagonal of the factor; the
    matrix is treated as singular when the smallest is below ``tol`` times the
    largest, or when it is not positive definite at all.
    """
    try:
        factor = scipy.linalg.cho_factor(Sw, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularScatter("within-class scatter is not positive definite") from exc
    pivots = np.diag(factor[0]) ** 2
    if not np.all(np.isfinite(pivots)) or pivots.min() <= tol * pivots.max():
        raise SingularScatter(
            f"within-class scatter is numerically singular "
            f"(pivot ratio {pivots.min() / pivots.max():.3g} <= {tol:g})")
    return factor


def trace_criterion_direct(data: Dataset, subset: Sequence[int], *, tol: float = DEFAULT_SINGULAR_TOL,
                           stats: ClassStats | None = None) -> float:
    """``trace(Sw^-1 Sb)`` by solving against the within-class scatter."""
    stats = compute_class_stats(data) if stats is None else stats
    Sw = within_scatter(data, stats, subset)
    Sb = between_scatter(data, stats, subset)
    factor = factor_scatter(Sw, tol)
    t = float(np.trace(scipy.linalg.cho_solve(factor, Sb, check_finite=False)))
    return max(t, 0.0)


def trace_criterion_mahalanobis(data: Dataset, stats: ClassStats, subset: Sequence[int], *,
                                tol: float = DEFAULT_SINGULAR_TOL) -> float:
    """Count-weighted sum of squared Mahalanobis distances from class means to the overall mean.

    Equal to :func:`trace_criterion_direct`; the ``n_i`` weights are required for
    the identity to hold with the count-weighted between-class scatter.
    """
    idx = check_subset(subset, data.p)
    Sw = within_scatter(data, stats, idx)
    factor = factor_scatter(Sw, tol)
    D = stats.class_means[:, idx] - stats.overall_mean[idx]
    W = scipy.linalg.cho_solve(factor, D.T, check_finite=False)
    t = float(np.sum(stats.counts * np.einsum("ij,ji->i", D, W)))
    return max(t, 0.0)


def single_feature_trace(data: Dataset, stats: ClassStats, f: int, *, tol: float = DEFAULT_SINGULAR_TOL) -> float:
    """Between-class over within-class sum of squares for one column, in O(n)."""
    x = data.features[:, f]
    between = float(np.sum(stats.counts * (stats.class_means[:, f] - stats.overall_mean[f]) ** 2))
    within = float(np.sum((x - stats.class_means[data.labels, f]) ** 2))
    if within <= tol * (within + between) or within == 0.0:
        raise SingularScatter(f"feature {f} has zero within-class variance")
    return between / within


def ols_sse(design: np.ndarray, response: np.ndarray, *, tol: float = DEFAULT_SINGULAR_TOL) -> float:
    """Residual sum of squares of the least-squares fit of ``response`` on ``design``.

    Raises
    ------
    RankDeficient
        If ``design`` does not have full column rank.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < X.shape[1]:
        raise RankDeficient(f"{X.shape[1]} columns but only {X.shape[0]} rows")
    Q, R = np.linalg.qr(X, mode="reduced")
    r = np.abs(np.diag(R))
    if r.size and (r.max() == 0.0 or r.min() <= tol * r.max()):
        raise RankDeficient("design matrix is rank deficient")
    resid = y - Q @ (Q.T @ y)
    return float(resid @ resid)
