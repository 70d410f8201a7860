"""Parallel forward-backward selection with early dropping.

The run is a sequence of bulk-synchronous rounds.  In each round every worker
owns one feature block, scores it against the same immutable round-start
:class:`~pfst.incremental.SelectionState`, and returns its nominee together
with the pruned block.  A single merger then commits the nominees in
ascending block order, re-checking each against the growing state so that
cross-block collinearity can never corrupt the cached inverse.

Stages: per-block best singletons, forward rounds with early dropping until
every block is empty, a pool reset to the unselected features followed by at
most ``max_ref`` plain forward rounds, and finally backward elimination.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BadBlockCount, ConfigError, NoAdmissibleFeature, NumericalError, SingularUpdate
from .incremental import (
    ScatterCache,
    SelectionState,
    add_deltas,
    commit_add,
    commit_remove,
    evaluate_add,
    init_state,
)
from .io import standardize
from .report import DropEvent, SelectionReport, TraceEvent
from .scatter import DEFAULT_SINGULAR_TOL, Dataset, trace_criterion_direct


def available_parallelism() -> int:
    """CPU count, capped by the ``PFST_THREADS`` environment variable."""
    try:
        n = len(os.sched_getaffinity(0))
    except AttributeError:
        n = os.cpu_count() or 1
    env = os.environ.get("PFST_THREADS")
    if env:
        try:
            n = min(n, max(int(env), 1))
        except ValueError:
            raise ConfigError(f"PFST_THREADS must be an integer, got {env!r}") from None
    return max(n, 1)


@dataclass(frozen=True)
class PfstConfig:
    alpha: float = 0.05
    beta: float = 0.01
    gamma: float = 0.05
    blocks: int | None = None  # None: available parallelism, capped at p
    max_ref: int = 1
    tol: float = DEFAULT_SINGULAR_TOL
    seed: int = 0
    standardize: bool = True
    max_features: int | None = None
    parallel_backward_min: int = 64
    threads: int | None = None  # None: min(blocks, available parallelism)
    debug: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma >= 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.beta < self.alpha:
            raise ConfigError(f"beta ({self.beta}) must be smaller than alpha ({self.alpha})")
        if self.blocks is not None and self.blocks < 1:
            raise BadBlockCount(f"block count must be at least 1, got {self.blocks}")
        if self.max_ref < 0:
            raise ConfigError("max_ref must be nonnegative")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError("max_features must be at least 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    def block_count(self, p: int) -> int:
        b = self.blocks if self.blocks is not None else available_parallelism()
        if self.blocks is not None and self.blocks > p:
            raise BadBlockCount(f"{self.blocks} blocks for {p} features")
        return min(b, p)


@dataclass(frozen=True)
class FeatureBlock:
    worker: int
    pool: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.pool)

    def without(self, drop: Iterable[int]) -> "FeatureBlock":
        drop = set(drop)
        return FeatureBlock(self.worker, tuple(f for f in self.pool if f not in drop))


@dataclass(frozen=True)
class WorkerResult:
    candidate: int | None
    delta: float
    block: FeatureBlock
    drops: tuple[tuple[int, str], ...] = ()


def partition_pool(features: Sequence[int], n_blocks: int, seed: int) -> list[FeatureBlock]:
    """Seeded shuffle of ``features`` dealt round-robin into ``n_blocks`` blocks."""
    feats = np.sort(np.asarray(list(features), dtype=np.int64))
    order = np.random.default_rng(seed).permutation(feats.size)
    shuffled = feats[order]
    return [FeatureBlock(b, tuple(sorted(int(f) for f in shuffled[b::n_blocks]))) for b in range(n_blocks)]


def partition_features(p: int, n_blocks: int, seed: int = 0) -> list[FeatureBlock]:
    """Disjoint cover of ``range(p)`` by ``n_blocks`` blocks whose sizes differ by at most one."""
    if not 1 <= n_blocks <= p:
        raise BadBlockCount(f"need 1 <= blocks <= p, got blocks={n_blocks}, p={p}")
    return partition_pool(range(p), n_blocks, seed)


class _Workers:
    """Maps a function over blocks, on a thread pool when more than one thread is allowed."""

    def __init__(self, threads: int):
        self.threads = threads
        self._pool = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="pfst") if threads > 1 else None

    def map(self, fn: Callable, items: Sequence) -> list:
        if self._pool is None or len(items) <= 1:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def best_singleton_in_block(cache: ScatterCache, block: FeatureBlock) -> WorkerResult:
    """Worker task of the initial round."""
    F = np.asarray(block.pool, dtype=np.int64)
    if F.size == 0:
        return WorkerResult(None, float("nan"), block)
    t = cache.singleton_traces(F)
    bad = np.isnan(t)
    drops = tuple((int(f), "degenerate") for f in F[bad])
    if bad.all():
        return WorkerResult(None, float("nan"), FeatureBlock(block.worker, ()), drops)
    j = int(np.nanargmax(t))
    f = int(F[j])
    return WorkerResult(f, float(t[j]), block.without([f, *F[bad].tolist()]), drops)


def init_round(blocks: Sequence[FeatureBlock], cache: ScatterCache, workers: _Workers | None = None) -> list[WorkerResult]:
    """Per-block best single feature, one worker per block.

    Blocks made up only of degenerate features yield no candidate and come back empty.
    """
    workers = workers or _Workers(1)
    return workers.map(lambda b: best_singleton_in_block(cache, b), list(blocks))


def _score_block(block: FeatureBlock, state: SelectionState):
    F = np.asarray(block.pool, dtype=np.int64)
    delta, _, ok = add_deltas(state, F)
    return F, delta, ok


def one_forward_dropping(block: FeatureBlock, state: SelectionState, alpha: float, gamma: float) -> WorkerResult:
    """Nominate the block's best feature and early-drop every feature gaining less than ``gamma``.

    When even the best gain is below ``alpha`` the block is emptied.  Collinear
    and degenerate candidates count as gaining less than ``gamma``.
    """
    F, delta, ok = _score_block(block, state)
    if F.size == 0:
        return WorkerResult(None, float("nan"), block)
    collinear = tuple((int(f), "collinear") for f in F[~ok])
    score = np.where(ok, delta, -np.inf)
    j = int(np.argmax(score))
    if not ok.any() or score[j] < alpha:
        rest = tuple((int(f), "blockExhausted") for f in F[ok])
        return WorkerResult(None, float(score[j]) if ok.any() else float("nan"),
                            FeatureBlock(block.worker, ()), collinear + rest)
    f = int(F[j])
    dropped = ok & (delta < gamma)
    early = tuple((int(g), "earlyDrop") for g in F[dropped])
    gone = {f, *F[~ok].tolist(), *F[dropped].tolist()}
    return WorkerResult(f, float(delta[j]), block.without(gone), collinear + early)


def one_reforward(block: FeatureBlock, state: SelectionState, alpha: float) -> WorkerResult:
    """As :func:`one_forward_dropping` without the early-dropping set."""
    F, delta, ok = _score_block(block, state)
    if F.size == 0:
        return WorkerResult(None, float("nan"), block)
    collinear = tuple((int(f), "collinear") for f in F[~ok])
    score = np.where(ok, delta, -np.inf)
    j = int(np.argmax(score))
    if not ok.any() or score[j] < alpha:
        rest = tuple((int(f), "blockExhausted") for f in F[ok])
        return WorkerResult(None, float(score[j]) if ok.any() else float("nan"),
                            FeatureBlock(block.worker, ()), collinear + rest)
    f = int(F[j])
    return WorkerResult(f, float(delta[j]), block.without([f, *F[~ok].tolist()]), collinear)


@dataclass
class _Log:
    trace: list[TraceEvent] = field(default_factory=list)
    drops: list[DropEvent] = field(default_factory=list)

    def drop(self, feature: int, round_: int, reason: str, stage: str):
        self.drops.append(DropEvent(int(feature), round_, reason, stage))


def merge_candidates(state: SelectionState, candidates: Sequence[int | None], alpha: float, *,
                     max_features: int | None = None, log_: _Log | None = None,
                     stage: str = "merge", round_: int = 0) -> SelectionState:
    """Commit nominees in block order, each re-scored against the growing state.

    A nominee is committed only if it is still non-collinear and still gains at
    least ``alpha``; skipped nominees are logged.
    """
    log_ = log_ if log_ is not None else _Log()
    for f in candidates:
        if f is None:
            continue
        if max_features is not None and state.size >= max_features:
            log_.drop(f, round_, "capReached", stage)
            continue
        try:
            cand = evaluate_add(state, f)
        except SingularUpdate:
            log_.drop(f, round_, "collinear", stage)
            continue
        if cand.delta < alpha:
            log_.drop(f, round_, "belowAlphaAtMerge", stage)
            continue
        state = commit_add(state, cand)
        log_.trace.append(TraceEvent(stage, "add", f, state.t, cand.delta, round_))
    return state


def _block_least_loss(state: SelectionState, positions: np.ndarray) -> tuple[int, float] | None:
    if positions.size == 0:
        return None
    Q = state.mean_devs @ state.sw_inv[:, positions]
    losses = (state.counts @ (Q * Q)) / np.diag(state.sw_inv)[positions]
    feats = np.asarray(state.subset)[positions]
    k = int(np.lexsort((feats, losses))[0])
    return int(feats[k]), float(losses[k])


def backward_stage(state: SelectionState, beta: float, n_blocks: int, parallel_backward_min: int, *,
                   workers: _Workers | None = None, seed: int = 0, log_: _Log | None = None) -> SelectionState:
    """Remove the cheapest feature while its loss is below ``beta``.

    The search for the cheapest removal is split over ``n_blocks`` workers only
    when at least ``parallel_backward_min`` features are selected.
    """
    workers = workers or _Workers(1)
    log_ = log_ if log_ is not None else _Log()
    round_ = 0
    while state.size > 1:
        round_ += 1
        positions = np.arange(state.size)
        if n_blocks > 1 and state.size >= parallel_backward_min:
            parts = [np.asarray(b.pool, dtype=np.int64)
                     for b in partition_pool(positions, min(n_blocks, state.size), seed + round_)]
            snapshot = state
            found = [r for r in workers.map(lambda pos: _block_least_loss(snapshot, pos), parts) if r]
        else:
            found = [_block_least_loss(state, positions)]
        f, loss = min(found, key=lambda r: (r[1], r[0]))
        if not loss < beta:
            break
        state = commit_remove(state, f)
        log_.trace.append(TraceEvent("backward", "remove", f, state.t, -loss, round_))
        log_.drop(f, round_, "backwardRemoved", "backward")
    return state


def _check_barrier(state: SelectionState, where: str):
    direct = trace_criterion_direct(state.cache.data, state.subset, tol=state.cache.tol, stats=state.cache.stats)
    if abs(direct - state.t) > 1e-8 * max(1.0, abs(direct)):
        raise NumericalError(f"{where}: cached t={state.t!r} drifted from direct t={direct!r}")


def pfst_select(data: Dataset, config: PfstConfig | None = None) -> SelectionReport:
    """Run the full parallel selection.

    Raises
    ------
    NoAdmissibleFeature
        If no block's best single feature reaches ``alpha``.
    """
    config = config or PfstConfig()
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if config.standardize:
        data = standardize(data)
    cache = ScatterCache.build(data, tol=config.tol)
    p = data.p
    B = config.block_count(p)
    threads = min(B, config.threads or available_parallelism())
    cap = config.max_features
    L = _Log()

    def capped(s):
        return cap is not None and s.size >= cap

    def barrier(s, where):
        if config.debug:
            _check_barrier(s, where)

    with _Workers(threads) as workers:
        blocks = partition_features(p, B, config.seed)
        results = init_round(blocks, cache, workers)
        blocks = [r.block for r in results]
        for r in results:
            for f, reason in r.drops:
                L.drop(f, 0, reason, "init")
        nominees = [r.candidate for r in results]
        admitted = [f for r, f in zip(results, nominees) if f is not None and r.delta >= config.alpha]
        for r in results:
            if r.candidate is not None and r.delta < config.alpha:
                L.drop(r.candidate, 0, "belowAlpha", "init")
        if not admitted:
            best = max((r.delta for r in results if r.candidate is not None), default=float("nan"))
            raise NoAdmissibleFeature(
                f"no single feature reaches alpha={config.alpha:g} (best criterion {best:.4g})")
        state = init_state(cache, admitted[0])
        L.trace.append(TraceEvent("init", "add", admitted[0], state.t, state.t, 0))
        state = merge_candidates(state, admitted[1:], config.alpha, max_features=cap, log_=L, stage="init")
        barrier(state, "init")
        timings["init"] = time.perf_counter() - t0

        t1 = time.perf_counter()
        round_ = 0
        while any(blocks) and not capped(state):
            round_ += 1
            snapshot = state
            results = workers.map(lambda b: one_forward_dropping(b, snapshot, config.alpha, config.gamma), blocks)
            blocks = [r.block for r in results]
            for r in results:
                for f, reason in r.drops:
                    L.drop(f, round_, reason, "forwardDropping")
            state = merge_candidates(state, [r.candidate for r in results], config.alpha,
                                     max_features=cap, log_=L, stage="forwardDropping", round_=round_)
            barrier(state, f"forward-dropping round {round_}")
        timings["forwardDropping"] = time.perf_counter() - t1

        t2 = time.perf_counter()
        selected = set(state.subset)
        pool = [f for f in range(p) if f not in selected and not cache.degenerate([f])[0]]
        blocks = partition_pool(pool, B, config.seed)
        runs = 0
        while runs < config.max_ref and any(blocks) and not capped(state):
            runs += 1
            snapshot = state
            results = workers.map(lambda b: one_reforward(b, snapshot, config.alpha), blocks)
            blocks = [r.block for r in results]
            for r in results:
                for f, reason in r.drops:
                    L.drop(f, runs, reason, "reforward")
            state = merge_candidates(state, [r.candidate for r in results], config.alpha,
                                     max_features=cap, log_=L, stage="reforward", round_=runs)
            barrier(state, f"re-forward round {runs}")
        timings["reforward"] = time.perf_counter() - t2

        t3 = time.perf_counter()
        state = backward_stage(state, config.beta, B, config.parallel_backward_min,
                               workers=workers, seed=config.seed, log_=L)
        barrier(state, "backward")
        timings["backward"] = time.perf_counter() - t3

    echo = asdict(config)
    echo["blocks"] = B
    echo["threads"] = threads
    return SelectionReport("pfst", list(state.subset), [data.names[f] for f in state.subset], state.t,
                           L.trace, L.drops, timings, echo)
