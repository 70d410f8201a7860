import math

import numpy as np
import pytest

from conftest import random_dataset
from pfst.errors import ConfigError, NoAdmissibleFeature, SingularScatter
from pfst.greedy import StopRule, backward_select, forward_select, stepwise_select
from pfst.scatter import Dataset, trace_criterion_direct


def direct(d, subset):
    try:
        return trace_criterion_direct(d, subset)
    except SingularScatter:
        return -math.inf


def brute_forward(d, alpha):
    """Forward selection driven only by the direct criterion."""
    R, t = [], 0.0
    while True:
        gains = [(direct(d, R + [f]) - t, -f) for f in range(d.p) if f not in R]
        if not gains:
            return R
        g, negf = max(gains)
        if g < alpha:
            return R
        R.append(-negf)
        t += g


def brute_backward(d, beta):
    R = list(range(d.p))
    while len(R) > 1:
        t = direct(d, R)
        losses = sorted((t - direct(d, [g for g in R if g != f]), f) for f in R)
        loss, f = losses[0]
        if not loss < beta:
            break
        R.remove(f)
    return R


def brute_stepwise(d, alpha, beta):
    R, pool = [], list(range(d.p))
    while pool:
        t = direct(d, R) if R else 0.0
        g, negf = max((direct(d, R + [f]) - t, -f) for f in pool)
        if g < alpha:
            break
        R.append(-negf)
        pool.remove(-negf)
        while len(R) > 1:
            t = direct(d, R)
            loss, f = min((t - direct(d, [h for h in R if h != f]), f) for f in R)
            if not loss < beta:
                break
            R.remove(f)
    return R


def dominant_instance(rng, n=200, p=6):
    y = np.arange(n) % 2
    X = rng.normal(size=(n, p))
    X[:, 3] += 3.0 * y
    return Dataset(X, y)


def redundancy_instance(seed):
    """Column 0 is b + c + noise; it enters first and becomes redundant once 1 and 2 are in."""
    rng = np.random.default_rng(seed)
    n = 600
    y = np.arange(n) % 2
    b = y + rng.normal(size=n)
    c = y + rng.normal(size=n)
    a = b + c + rng.normal(size=n)
    return Dataset(np.column_stack([a, b, c, rng.normal(size=(n, 3))]), y)


class TestStopRule:
    def test_defaults(self):
        r = StopRule()
        assert (r.alpha, r.beta) == (0.05, 0.01)

    @pytest.mark.parametrize("kw", [dict(alpha=0), dict(beta=-1), dict(alpha=0.1, beta=0.1), dict(max_features=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            StopRule(**kw)


class TestForward:
    def test_dominant_first(self, rng):
        d = dominant_instance(rng)
        singles = [trace_criterion_direct(d, [f]) for f in range(d.p)]
        r = forward_select(d, rule=StopRule(alpha=0.05))
        assert r.selected[0] == int(np.argmax(singles)) == 3

    def test_alpha_too_large(self, rng):
        with pytest.raises(NoAdmissibleFeature):
            forward_select(dominant_instance(rng), rule=StopRule(alpha=1e9, beta=0))

    def test_duplicate_columns_admit_one(self, rng):
        d = dominant_instance(rng)
        X = np.hstack([d.features, d.features[:, 3:4]])
        r = forward_select(Dataset(X, d.labels), rule=StopRule(alpha=1e-6, beta=0))
        assert (3 in r.selected) != (6 in r.selected)
        assert any(e.feature in (3, 6) and e.reason == "collinear" for e in r.drop_log)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        d = random_dataset(np.random.default_rng(seed), n=120, p=8, shift=0.4)
        r = forward_select(d, rule=StopRule(alpha=0.02, beta=0))
        assert r.selected == brute_forward(d, 0.02)

    def test_trajectory_monotone(self, rng):
        d = random_dataset(rng, n=150, p=12, shift=0.5)
        r = forward_select(d, rule=StopRule(alpha=0.01, beta=0))
        ts = [e.t for e in r.trace]
        assert all(b - a >= 0.01 - 1e-12 for a, b in zip(ts, ts[1:]))
        assert all(e.delta >= 0.01 for e in r.trace)
        assert r.replay() == r.selected

    def test_max_features(self, rng):
        d = random_dataset(rng, n=150, p=12, shift=1.0)
        r = forward_select(d, rule=StopRule(alpha=1e-4, beta=0, max_features=3))
        assert len(r.selected) == 3


class TestBackward:
    def test_redundant_column_removed_first(self, rng):
        n = 300
        y = np.arange(n) % 2
        X = rng.normal(size=(n, 4)) + np.outer(y, [1.0, 0.8, 0.0, 0.0])
        dup = X[:, 0] + 0.05 * rng.normal(size=n)
        d = Dataset(np.column_stack([X, dup - dup.mean()]), y)
        t = trace_criterion_direct(d, range(5))
        losses = {f: t - trace_criterion_direct(d, [g for g in range(5) if g != f]) for f in range(5)}
        r = backward_select(d, rule=StopRule(alpha=1.0, beta=0.5))
        first = r.drop_log[0].feature
        assert first == min(losses, key=losses.get)
        assert first in (0, 4) or losses[first] <= min(losses[0], losses[4])

    def test_beta_zero_keeps_everything(self, rng):
        d = random_dataset(rng, n=100, p=7)
        assert backward_select(d, rule=StopRule(beta=0)).selected == list(range(7))

    def test_single_feature(self, tiny):
        assert backward_select(tiny).selected == [0]

    def test_singular_full_set(self, rng):
        X = rng.normal(size=(30, 2))
        d = Dataset(np.hstack([X, X[:, :1]]), np.arange(30) % 2)
        with pytest.raises(SingularScatter, match="standardize"):
            backward_select(d)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force(self, seed):
        d = random_dataset(np.random.default_rng(seed), n=150, p=9, shift=0.4)
        r = backward_select(d, rule=StopRule(alpha=1.0, beta=0.05))
        assert sorted(r.selected) == sorted(brute_backward(d, 0.05))
        t_full = trace_criterion_direct(d, range(9))
        removed = d.p - len(r.selected)
        assert r.t >= t_full - 0.05 * removed - 1e-9


class TestStepwise:
    @pytest.mark.parametrize("seed", range(4))
    def test_redundant_feature_exits(self, seed):
        d = redundancy_instance(seed)
        r = stepwise_select(d, rule=StopRule(alpha=0.02, beta=0.01))
        actions = [(e.action, e.feature) for e in r.trace]
        assert actions[:4] == [("add", 0), ("add", 1), ("add", 2), ("remove", 0)]
        assert r.selected == brute_stepwise(d, 0.02, 0.01)
        assert 0 not in r.selected

    def test_independent_features_equal_forward(self):
        rng = np.random.default_rng(3)
        n, p = 400, 6
        y = np.arange(n) % 3
        X = rng.normal(size=(n, p)) + rng.normal(0, 1.0, size=(3, p))[y]
        d = Dataset(X, y)
        rule = StopRule(alpha=0.05, beta=0.01)
        assert stepwise_select(d, rule=rule).selected == forward_select(d, rule=rule).selected

    @pytest.mark.parametrize("seed", range(5))
    def test_beta_zero_equals_forward(self, seed):
        d = random_dataset(np.random.default_rng(seed), n=150, p=10, shift=0.5)
        rule = StopRule(alpha=0.01, beta=0.0)
        assert stepwise_select(d, rule=rule).selected == forward_select(d, rule=rule).selected

    @pytest.mark.parametrize("seed", range(5))
    def test_terminates_within_bound(self, seed):
        d = random_dataset(np.random.default_rng(seed), n=120, p=10, shift=0.5)
        rule = StopRule(alpha=0.03, beta=0.02)
        r = stepwise_select(d, rule=rule)
        t_full = trace_criterion_direct(d, range(d.p))
        bound = d.p * (math.ceil(t_full / (rule.alpha - rule.beta)) + 1)
        assert len(r.trace) <= bound
        # final set is backward-stable
        t = trace_criterion_direct(d, r.selected)
        if len(r.selected) > 1:
            for f in r.selected:
                assert t - trace_criterion_direct(d, [g for g in r.selected if g != f]) >= rule.beta - 1e-12

    def test_deterministic(self, rng):
        d = random_dataset(rng, n=150, p=10, shift=0.5)
        assert stepwise_select(d).selected == stepwise_select(d).selected
