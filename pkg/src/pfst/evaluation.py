"""LDA classification and stratified k-fold cross-validation on a feature subset."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import MissingClass, SingularScatter, StratificationError
from .scatter import DEFAULT_SINGULAR_TOL, Dataset, check_subset, factor_scatter

TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Pooled-covariance linear discriminant.

    The score of class ``k`` at ``x`` is ``x' coef[k] + intercept[k]`` with
    ``coef[k] = Sigma^-1 mu_k`` and ``intercept[k] = -mu_k' Sigma^-1 mu_k / 2 + log prior_k``.
    """

    subset: tuple[int, ...]
    means: np.ndarray  # (C, |R|)
    priors: np.ndarray  # (C,)
    coef: np.ndarray  # (C, |R|)
    intercept: np.ndarray  # (C,)

    def scores(self, rows: np.ndarray) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return X[:, list(self.subset)] @ self.coef.T + self.intercept


def lda_fit(train: Dataset, subset: Sequence[int], *, ridge: float = 0.0,
            tol: float = DEFAULT_SINGULAR_TOL) -> LdaModel:
    """Fit LDA on ``train`` restricted to ``subset``.

    Raises
    ------
    MissingClass
        If a class has fewer than two training samples.
    SingularScatter
        If the pooled covariance is numerically singular.
    """
    idx = check_subset(subset, train.p)
    C = train.n_classes
    counts = np.bincount(train.labels, minlength=C)
    short = np.flatnonzero(counts < 2)
    if short.size:
        raise MissingClass(f"classes {[train.class_names[c] for c in short]} have fewer than 2 training samples")
    X = train.features[:, idx]
    means = np.stack([X[train.labels == c].mean(axis=0) for c in range(C)])
    Z = X - means[train.labels]
    cov = (Z.T @ Z) / (train.n - C)
    cov = (cov + cov.T) / 2
    if ridge > 0:
        cov = cov + ridge * np.eye(idx.size)
    try:
        factor = factor_scatter(cov, tol)
    except SingularScatter as exc:
        raise SingularScatter(f"pooled covariance: {exc}") from exc
    coef = scipy.linalg.cho_solve(factor, means.T, check_finite=False).T
    priors = counts / counts.sum()
    intercept = -0.5 * np.einsum("ij,ij->i", means, coef) + np.log(priors)
    return LdaModel(tuple(int(j) for j in idx), means, priors, coef, intercept)


def lda_predict(model: LdaModel, rows: np.ndarray) -> np.ndarray:
    """Class with the largest discriminant score; near-ties go to the lowest class id."""
    S = model.scores(rows)
    top = S.max(axis=1, keepdims=True)
    tied = S >= top - TIE_RTOL * (1.0 + np.abs(top))
    return np.argmax(tied, axis=1)


@dataclass(frozen=True)
class CvResult:
    fold_errors: tuple[float, ...]
    mean_error: float
    k: int
    seed: int

    def to_dict(self) -> dict:
        return {"fold_errors": list(self.fold_errors), "mean_error": self.mean_error, "k": self.k, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "CvResult":
        return cls(tuple(d["fold_errors"]), d["mean_error"], d["k"], d["seed"])


def stratified_folds(labels: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per row; each class is shuffled and dealt round-robin.

    The dealing continues across classes so total fold sizes also differ by at most one.

    Raises
    ------
    StratificationError
        If ``k < 2`` or some class has fewer than ``k`` members.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise StratificationError(f"need at least 2 folds, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        c = classes[np.argmin(counts)]
        raise StratificationError(f"class {c} has {counts.min()} members, fewer than k={k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        folds[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return folds


def _fold_error(data: Dataset, subset, folds: np.ndarray, i: int, ridge: float, tol: float) -> float:
    test = folds == i
    model = lda_fit(data.take(np.flatnonzero(~test)), subset, ridge=ridge, tol=tol)
    pred = lda_predict(model, data.features[test])
    return float(np.mean(pred != data.labels[test]))


def kfold_cv(data: Dataset, subset: Sequence[int], k: int = 5, seed: int = 0, *, ridge: float = 0.0,
             tol: float = DEFAULT_SINGULAR_TOL, threads: int = 1) -> CvResult:
    """Stratified k-fold misclassification rate of LDA on a fixed feature subset.

    The subset is taken as given; selection is not repeated inside each fold.
    """
    folds = stratified_folds(data.labels, k, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, k)) as ex:
            errors = list(ex.map(lambda i: _fold_error(data, subset, folds, i, ridge, tol), range(k)))
    else:
        errors = [_fold_error(data, subset, folds, i, ridge, tol) for i in range(k)]
    return CvResult(tuple(errors), float(np.mean(errors)), k, seed)
