"""Incremental maintenance of the trace criterion under single-feature moves.

A :class:`SelectionState` caches the within-class scatter of the selected set,
its inverse, and the class-mean deviations restricted to the set.  Adding a
feature extends the inverse with the block (Schur complement) formula; removing
one downdates it with ``E - f f' / g``.  Both cost O(|R|^2) once the cross
scatter between the selected set and the candidate is known, and that cross
scatter is cached row-by-row as features enter the set.

States are immutable from the caller's point of view: ``commit_*`` returns a new
state and ``evaluate_*`` never mutates, so many threads may score candidates
against one shared snapshot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import SingularScatter, SingularUpdate, StaleCandidate, SubsetTooSmall
from .scatter import DEFAULT_SINGULAR_TOL, ClassStats, Dataset, compute_class_stats, factor_scatter

DRIFT_TOL = 1e-8
REFACTOR_PERIOD = 64

_tokens = itertools.count()


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScatterCache:
    """Per-dataset quantities shared by every state built on that dataset.

    Attributes
    ----------
    centered : ndarray (n, p)
        Observations minus their class mean.
    within_diag : ndarray (p,)
        Within-class sum of squares of each column (the ``u`` of a candidate).
    between_diag : ndarray (p,)
        Count-weighted between-class sum of squares of each column.
    mean_devs : ndarray (C, p)
        Class means minus the overall mean.
    counts : ndarray (C,)
        Class sizes, as floats.
    """

    data: Dataset
    stats: ClassStats
    centered: np.ndarray
    within_diag: np.ndarray
    between_diag: np.ndarray
    mean_devs: np.ndarray
    counts: np.ndarray
    tol: float = DEFAULT_SINGULAR_TOL

    @classmethod
    def build(cls, data: Dataset, stats: ClassStats | None = None, tol: float = DEFAULT_SINGULAR_TOL) -> "ScatterCache":
        stats = compute_class_stats(data) if stats is None else stats
        Z = data.features - stats.class_means[data.labels]
        D = stats.class_means - stats.overall_mean
        counts = stats.counts.astype(np.float64)
        within = np.einsum("ij,ij->j", Z, Z)
        between = counts @ (D * D)
        return cls(data, stats, _frozen(Z), _frozen(within), _frozen(between), _frozen(D),
                   _frozen(counts), tol)

    @property
    def p(self) -> int:
        return self.centered.shape[1]

    def degenerate(self, features: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        """Mask of columns whose within-class variance is numerically zero."""
        idx = slice(None) if features is None else np.asarray(features, dtype=np.int64)
        u = self.within_diag[idx]
        return (u == 0.0) | (u <= self.tol * (u + self.between_diag[idx]))

    def singleton_traces(self, features: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        """Criterion of each single column; ``nan`` where the column is degenerate."""
        idx = slice(None) if features is None else np.asarray(features, dtype=np.int64)
        u = self.within_diag[idx]
        bad = self.degenerate(features)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.between_diag[idx] / u
        return np.where(bad, np.nan, t)

    def cross_row(self, f: int) -> np.ndarray:
        """Within-class cross scatter of column ``f`` with every column."""
        return self.centered[:, f] @ self.centered


@dataclass(frozen=True, eq=False)
class SelectionState:
    """Selected features with the cached scatter, its inverse and ``t_R``."""

    cache: ScatterCache
    subset: tuple[int, ...]
    sw: np.ndarray
    sw_inv: np.ndarray
    mean_devs: np.ndarray  # (C, |R|)
    cross: np.ndarray  # (|R|, p)
    t: float
    token: int
    commits_since_refactor: int = 0

    @property
    def size(self) -> int:
        return len(self.subset)

    @property
    def counts(self) -> np.ndarray:
        return self.cache.counts

    def residual(self) -> float:
        """``max |S_R S_R^-1 - I|``."""
        return float(np.max(np.abs(self.sw @ self.sw_inv - np.eye(self.size))))

    def __contains__(self, f: int) -> bool:
        return f in self.subset


@dataclass(frozen=True, eq=False)
class CandidateDelta:
    feature: int
    schur: float
    delta: float
    v: np.ndarray
    u: float
    w: np.ndarray  # S_R^-1 v
    token: int


def _make_state(cache, subset, sw, sw_inv, mean_devs, cross, t, commits=0) -> SelectionState:
    return SelectionState(cache, tuple(int(f) for f in subset), _frozen(sw), _frozen(sw_inv),
                          _frozen(mean_devs), _frozen(cross), float(t), next(_tokens), commits)


def _needs_refactor(state: SelectionState) -> bool:
    if state.commits_since_refactor >= REFACTOR_PERIOD:
        return True
    k = state.size
    if k <= REFACTOR_PERIOD:
        return state.residual() > DRIFT_TOL
    # two O(k^2) probes instead of the full O(k^3) residual
    probes = np.ones((k, 2))
    probes[1::2, 1] = -1.0
    return float(np.max(np.abs(state.sw @ (state.sw_inv @ probes) - probes))) > DRIFT_TOL


def _trace_from_factor(factor, mean_devs: np.ndarray, counts: np.ndarray) -> float:
    W = scipy.linalg.cho_solve(factor, mean_devs.T, check_finite=False)
    return max(float(np.sum(counts * np.einsum("ij,ji->i", mean_devs, W))), 0.0)


def build_state(cache: ScatterCache, subset: Sequence[int]) -> SelectionState:
    """State for an arbitrary subset, factorized from scratch.

    Raises
    ------
    SingularScatter
        If the within-class scatter of ``subset`` is numerically singular.
    """
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.size == 0:
        raise SubsetTooSmall("a selection state needs at least one feature")
    if np.unique(idx).size != idx.size:
        raise ValueError("subset contains duplicates")
    bad = idx[cache.degenerate(idx)]
    if bad.size:
        raise SingularScatter(f"features {bad.tolist()} have zero within-class variance")
    cross = cache.centered[:, idx].T @ cache.centered
    sw = cross[:, idx]
    sw = (sw + sw.T) / 2
    factor = factor_scatter(sw, cache.tol)
    sw_inv = scipy.linalg.cho_solve(factor, np.eye(idx.size), check_finite=False)
    sw_inv = (sw_inv + sw_inv.T) / 2
    mean_devs = np.ascontiguousarray(cache.mean_devs[:, idx])
    t = _trace_from_factor(factor, mean_devs, cache.counts)
    return _make_state(cache, idx, sw, sw_inv, mean_devs, cross, t)


def init_state(cache: ScatterCache, f: int) -> SelectionState:
    """Single-feature state; ``t`` equals the single-feature criterion."""
    if cache.degenerate([f])[0]:
        raise SingularScatter(f"feature {f} has zero within-class variance")
    u = float(cache.within_diag[f])
    t = float(cache.between_diag[f]) / u
    cross = cache.cross_row(f)[None, :]
    return _make_state(cache, [f], np.array([[u]]), np.array([[1.0 / u]]),
                       np.ascontiguousarray(cache.mean_devs[:, [f]]), cross, t)


def refactorize(state: SelectionState) -> SelectionState:
    """Recompute the inverse and ``t`` from the cached scatter, discarding drift."""
    cache = state.cache
    idx = np.asarray(state.subset, dtype=np.int64)
    sw = state.cross[:, idx]
    sw = (sw + sw.T) / 2
    factor = factor_scatter(sw, cache.tol)
    sw_inv = scipy.linalg.cho_solve(factor, np.eye(idx.size), check_finite=False)
    sw_inv = (sw_inv + sw_inv.T) / 2
    t = _trace_from_factor(factor, state.mean_devs, cache.counts)
    return _make_state(cache, state.subset, sw, sw_inv, state.mean_devs.copy(), state.cross, t)


def add_deltas(state: SelectionState, features: Sequence[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score many candidates against one state.

    Returns
    -------
    delta : ndarray
        ``t_{R,f} - t_R`` per candidate (``nan`` where not admissible).
    schur : ndarray
        ``u - v' S_R^-1 v`` per candidate.
    admissible : ndarray of bool
        False where the candidate is degenerate or collinear with the set.
    """
    cache = state.cache
    F = np.asarray(features, dtype=np.int64)
    if F.size == 0:
        empty = np.empty(0)
        return empty, empty, np.empty(0, dtype=bool)
    V = state.cross[:, F]  # (|R|, |F|)
    W = state.sw_inv @ V
    u = cache.within_diag[F]
    schur = u - np.einsum("ij,ij->j", V, W)
    admissible = ~cache.degenerate(F) & (np.abs(schur) > cache.tol * u)
    A = state.mean_devs @ W  # (C, |F|)
    B = cache.mean_devs[:, F]
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = (cache.counts @ (A - B) ** 2) / schur
    delta = np.where(admissible, delta, np.nan)
    return delta, schur, admissible


def augmented_delta(sw_inv: np.ndarray, v: np.ndarray, u: float, mean_devs: np.ndarray,
                    new_devs: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    """Schur complement and criterion change for one appended row/column.

    Pure matrix form of the add step: ``S_R^-1`` is ``sw_inv``, the appended
    column is ``[v; u]``, ``mean_devs`` holds the class-mean deviations on R
    (one row per class) and ``new_devs`` those of the new feature.  No sign
    assumption is made on the Schur complement, so the function also applies to
    indefinite partitioned matrices.

    Returns
    -------
    schur, delta : float
        ``u - v' S_R^-1 v`` and ``sum_i n_i (a_i - b_i)^2 / schur``.
    """
    w = sw_inv @ v
    schur = float(u - v @ w)
    a = mean_devs @ w
    delta = float(counts @ (a - new_devs) ** 2) / schur
    return schur, delta


def evaluate_add(state: SelectionState, f: int) -> CandidateDelta:
    """Criterion change from adding ``f``, without committing.

    Raises
    ------
    SingularUpdate
        If ``f`` is degenerate or numerically collinear with the selected set.
    """
    if f in state.subset:
        raise ValueError(f"feature {f} is already selected")
    cache = state.cache
    v = state.cross[:, f].copy()
    w = state.sw_inv @ v
    u = float(cache.within_diag[f])
    schur = u - float(v @ w)
    if cache.degenerate([f])[0] or abs(schur) <= cache.tol * u:
        raise SingularUpdate(f, schur)
    _, delta = augmented_delta(state.sw_inv, v, u, state.mean_devs, cache.mean_devs[:, f], cache.counts)
    return CandidateDelta(int(f), schur, delta, _frozen(v), u, _frozen(w), state.token)


def commit_add(state: SelectionState, cand: CandidateDelta) -> SelectionState:
    """Append ``cand.feature`` using the block inverse formula."""
    if cand.token != state.token:
        raise StaleCandidate(f"candidate for feature {cand.feature} was scored against a different state")
    cache = state.cache
    f = cand.feature
    M = 1.0 / cand.schur
    w = cand.w
    k = state.size
    sw = np.empty((k + 1, k + 1))
    sw[:k, :k] = state.sw
    sw[:k, k] = sw[k, :k] = cand.v
    sw[k, k] = cand.u
    inv = np.empty((k + 1, k + 1))
    inv[:k, :k] = state.sw_inv + M * np.outer(w, w)
    inv[:k, k] = inv[k, :k] = -M * w
    inv[k, k] = M
    mean_devs = np.hstack([state.mean_devs, cache.mean_devs[:, [f]]])
    cross = np.vstack([state.cross, cache.cross_row(f)[None, :]])
    new = _make_state(cache, state.subset + (f,), sw, inv, mean_devs, cross,
                      state.t + cand.delta, state.commits_since_refactor + 1)
    if _needs_refactor(new):
        new = refactorize(new)
    return new


def removal_losses(state: SelectionState) -> np.ndarray:
    """``t_R - t_{R minus f}`` for every selected feature, in subset order.

    Uses ``t_R - t_{R\\f} = sum_i n_i ((S^-1 d_i)_f)^2 / (S^-1)_ff``, which is
    nonnegative by construction.
    """
    Q = state.mean_devs @ state.sw_inv  # (C, |R|)
    return (state.counts @ (Q * Q)) / np.diag(state.sw_inv)


def evaluate_remove(state: SelectionState, f: int) -> float:
    """``t_{R minus f} - t_R`` (never positive)."""
    if state.size < 2:
        raise SubsetTooSmall("cannot remove the only selected feature")
    k = state.subset.index(f)
    return -float(removal_losses(state)[k])


def commit_remove(state: SelectionState, f: int) -> SelectionState:
    """Drop ``f`` and downdate the inverse with ``E - f f' / g``."""
    if state.size < 2:
        raise SubsetTooSmall("cannot remove the only selected feature")
    k = state.subset.index(f)
    loss = float(removal_losses(state)[k])
    keep = np.array([j for j in range(state.size) if j != k])
    P = state.sw_inv
    col = P[keep, k]
    inv = P[np.ix_(keep, keep)] - np.outer(col, col) / P[k, k]
    sw = state.sw[np.ix_(keep, keep)]
    subset = tuple(s for s in state.subset if s != f)
    new = _make_state(state.cache, subset, sw, inv, state.mean_devs[:, keep].copy(),
                      state.cross[keep], max(state.t - loss, 0.0), state.commits_since_refactor + 1)
    if _needs_refactor(new):
        new = refactorize(new)
    return new


def best_addition(state: SelectionState, features: Iterable[int]):
    """Highest-delta admissible candidate; ties go to the lowest feature index.

    Returns ``(feature or None, delta, candidates, deltas, admissible)`` with the
    last three arrays in ascending feature order.
    """
    F = np.sort(np.fromiter(features, dtype=np.int64))
    delta, _, ok = add_deltas(state, F)
    if not ok.any():
        return None, float("nan"), F, delta, ok
    j = int(np.argmax(np.where(ok, delta, -np.inf)))
    return int(F[j]), float(delta[j]), F, delta, ok
