"""Sequential forward, backward and stepwise selection on the trace criterion.

These are the single-threaded baselines.  "Most useful" means the largest
criterion gain and "least useful" the smallest criterion loss; exact ties go to
the lowest column index.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, NoAdmissibleFeature, SingularScatter
from .incremental import (
    ScatterCache,
    SelectionState,
    best_addition,
    build_state,
    commit_add,
    commit_remove,
    evaluate_add,
    init_state,
    removal_losses,
)
from .report import DropEvent, SelectionReport, TraceEvent
from .scatter import DEFAULT_SINGULAR_TOL, ClassStats, Dataset


@dataclass(frozen=True)
class StopRule:
    """Thresholds for the greedy searches.

    ``alpha`` is the minimum gain to admit a feature, ``beta`` the loss below
    which a feature is removed.  ``beta < alpha`` keeps stepwise search from
    cycling.
    """

    alpha: float = 0.05
    beta: float = 0.01
    max_features: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if not self.beta < self.alpha:
            raise ConfigError(f"beta ({self.beta}) must be smaller than alpha ({self.alpha})")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError("max_features must be at least 1")


def least_useful(state: SelectionState) -> tuple[int, float]:
    """Selected feature whose removal costs the least, with that cost."""
    losses = removal_losses(state)
    order = np.lexsort((np.asarray(state.subset), losses))
    k = int(order[0])
    return state.subset[k], float(losses[k])


def best_singleton(cache: ScatterCache) -> tuple[int | None, float]:
    singles = cache.singleton_traces()
    if np.all(np.isnan(singles)):
        return None, float("nan")
    f = int(np.nanargmax(singles))
    return f, float(singles[f])


def _report(method, state, trace, drops, timings, config) -> SelectionReport:
    names = state.cache.data.names
    return SelectionReport(method, list(state.subset), [names[f] for f in state.subset], state.t,
                           trace, drops, timings, config)


def _first_feature(cache: ScatterCache, alpha: float, trace: list, drops: list) -> SelectionState:
    for f in np.flatnonzero(cache.degenerate()):
        drops.append(DropEvent(int(f), 0, "degenerate", "init"))
    f, t = best_singleton(cache)
    if f is None or t < alpha:
        raise NoAdmissibleFeature(
            f"no single feature reaches alpha={alpha:g} (best criterion {t:.4g})")
    state = init_state(cache, f)
    trace.append(TraceEvent("forward", "add", f, state.t, state.t))
    return state


def _forward_step(state, pool: set[int], alpha, trace, drops, stage, round_):
    """Admit the best candidate from ``pool`` if it gains at least ``alpha``."""
    best, delta, F, _, ok = best_addition(state, pool)
    for f in F[~ok]:
        pool.discard(int(f))
        drops.append(DropEvent(int(f), round_, "collinear", stage))
    if best is None or delta < alpha:
        return state, False
    cand = evaluate_add(state, best)
    state = commit_add(state, cand)
    pool.discard(best)
    trace.append(TraceEvent(stage, "add", best, state.t, cand.delta, round_))
    return state, True


def forward_select(data: Dataset, stats: ClassStats | None = None, rule: StopRule | None = None, *,
                   tol: float = DEFAULT_SINGULAR_TOL) -> SelectionReport:
    """Greedy forward selection.

    Raises
    ------
    NoAdmissibleFeature
        If no single feature reaches ``rule.alpha``.
    """
    rule = rule or StopRule()
    t0 = time.perf_counter()
    cache = ScatterCache.build(data, stats, tol)
    trace: list[TraceEvent] = []
    drops: list[DropEvent] = []
    state = _first_feature(cache, rule.alpha, trace, drops)
    pool = set(range(data.p)) - set(np.flatnonzero(cache.degenerate()).tolist()) - {state.subset[0]}
    round_ = 0
    while pool and (rule.max_features is None or state.size < rule.max_features):
        round_ += 1
        state, added = _forward_step(state, pool, rule.alpha, trace, drops, "forward", round_)
        if not added:
            break
    timings = {"forward": time.perf_counter() - t0}
    return _report("forward", state, trace, drops, timings, asdict(rule))


def _backward_loop(state, beta, trace, drops, stage, round_=0):
    while state.size > 1:
        f, loss = least_useful(state)
        if not loss < beta:
            break
        state = commit_remove(state, f)
        trace.append(TraceEvent(stage, "remove", f, state.t, -loss, round_))
        drops.append(DropEvent(f, round_, "backwardRemoved", stage))
    return state


def backward_select(data: Dataset, stats: ClassStats | None = None, rule: StopRule | None = None, *,
                    tol: float = DEFAULT_SINGULAR_TOL) -> SelectionReport:
    """Greedy backward elimination starting from every feature.

    Raises
    ------
    SingularScatter
        If the within-class scatter of the full feature set is singular.
    """
    rule = rule or StopRule()
    t0 = time.perf_counter()
    cache = ScatterCache.build(data, stats, tol)
    try:
        state = build_state(cache, range(data.p))
    except SingularScatter as exc:
        raise SingularScatter(
            f"{exc}; backward selection needs an invertible scatter on all features "
            "(standardize, or drop constant and collinear columns)") from exc
    trace = [TraceEvent("backward", "add", f, state.t, 0.0) for f in state.subset]
    drops: list[DropEvent] = []
    t1 = time.perf_counter()
    state = _backward_loop(state, rule.beta, trace, drops, "backward")
    timings = {"init": t1 - t0, "backward": time.perf_counter() - t1}
    return _report("backward", state, trace, drops, timings, asdict(rule))


def stepwise_select(data: Dataset, stats: ClassStats | None = None, rule: StopRule | None = None, *,
                    tol: float = DEFAULT_SINGULAR_TOL) -> SelectionReport:
    """Forward selection with a backward sweep after every admission.

    A feature removed by a backward sweep does not return to the candidate pool.
    """
    rule = rule or StopRule()
    t0 = time.perf_counter()
    cache = ScatterCache.build(data, stats, tol)
    trace: list[TraceEvent] = []
    drops: list[DropEvent] = []
    state = _first_feature(cache, rule.alpha, trace, drops)
    pool = set(range(data.p)) - set(np.flatnonzero(cache.degenerate()).tolist()) - {state.subset[0]}
    round_ = 0
    while pool and (rule.max_features is None or state.size < rule.max_features):
        round_ += 1
        state, added = _forward_step(state, pool, rule.alpha, trace, drops, "forward", round_)
        if not added:
            break
        state = _backward_loop(state, rule.beta, trace, drops, "backward", round_)
    timings = {"stepwise": time.perf_counter() - t0}
    return _report("stepwise", state, trace, drops, timings, asdict(rule))
