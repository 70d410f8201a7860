"""Acceptance criteria 1-9, one PASS/FAIL line each.

Every test records a verdict line (collected into the terminal summary by
``conftest.py``) before asserting, so a failing criterion still reports the
measured numbers.
"""

import json
import statistics
import time

import numpy as np
import pytest

from conftest import random_dataset
from pfst.cli import RunSpec, main, prepare_data, select_features
from pfst.engine import PfstConfig, pfst_select
from pfst.errors import PfstError
from pfst.evaluation import kfold_cv
from pfst.greedy import StopRule, forward_select
from pfst.incremental import (
    ScatterCache,
    augmented_delta,
    commit_add,
    commit_remove,
    evaluate_add,
    evaluate_remove,
    init_state,
)
from pfst.io import standardize, write_csv
from pfst.scatter import (
    compute_class_stats,
    ols_sse,
    trace_criterion_direct,
    trace_criterion_mahalanobis,
)
from pfst.synthetic import make_blobs

VERDICTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    VERDICTS[n] = line
    print(line)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture(scope="module")
def synthetic_500():
    return make_blobs(n=1000, p=500, n_informative=5, seed=0)


def test_criterion_1_mahalanobis_matches_direct():
    rng = np.random.default_rng(1)
    worst, t0 = 0.0, time.perf_counter()
    trials = 150
    for _ in range(trials):
        C = int(rng.integers(2, 6))
        p = int(rng.integers(1, 21))
        n = int(rng.integers(max(3 * C, p + C + 5), 201))
        d = random_dataset(rng, n=n, p=p, C=C)
        stats = compute_class_stats(d)
        sub = range(p)
        worst = max(worst, rel_err(trace_criterion_mahalanobis(d, stats, sub), trace_criterion_direct(d, sub, stats=stats)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5.0
    verdict(1, ok, f"{trials} instances, max rel err {worst:.2e} (<= 1e-10), {elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_2_incremental_matches_direct():
    rng = np.random.default_rng(2)
    worst = worst_residual = 0.0
    trials, max_size, t0 = 0, 0, time.perf_counter()
    while trials < 1200:
        d = random_dataset(rng, n=int(rng.integers(80, 201)), p=int(rng.integers(5, 26)))
        cache = ScatterCache.build(d)
        state = init_state(cache, int(rng.integers(d.p)))
        for _ in range(40):
            outside = [f for f in range(d.p) if f not in state.subset]
            remove = state.size > 1 and (not outside or state.size >= 20 or rng.random() < 0.4)
            before = trace_criterion_direct(d, state.subset)
            if remove:
                f = int(rng.choice(state.subset))
                delta = evaluate_remove(state, f)
                state = commit_remove(state, f)
            else:
                cand = evaluate_add(state, int(rng.choice(outside)))
                delta = cand.delta
                state = commit_add(state, cand)
            after = trace_criterion_direct(d, state.subset)
            # relative to the criterion scale: the direct difference itself carries eps * t of rounding
            worst = max(worst, abs(delta - (after - before)) / max(abs(after), abs(before), 1.0))
            worst = max(worst, rel_err(state.t, after))
            worst_residual = max(worst_residual, state.residual())
            max_size = max(max_size, state.size)
            trials += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and worst_residual <= 1e-8 and elapsed < 30.0 and max_size <= 20
    verdict(2, ok, f"{trials} add/remove trials (|R| <= {max_size}), max rel err {worst:.2e} (<= 1e-8), "
                   f"max residual {worst_residual:.2e} (<= 1e-8), {elapsed:.2f}s (< 30s)")
    assert ok


def _partitioned_trial(rng, negative: bool):
    """Indefinite-capable partitioned matrix: S_R positive definite, u chosen to fix the Schur sign."""
    k = int(rng.integers(1, 8))
    C = int(rng.integers(2, 6))
    A = rng.normal(size=(k + 3, k))
    S_R = A.T @ A + 0.1 * np.eye(k)
    v = rng.normal(size=k)
    q = float(v @ np.linalg.solve(S_R, v))
    gap = float(rng.uniform(0.05, 2.0)) * (1.0 + q)
    u = q - gap if negative else q + gap
    S = np.block([[S_R, v[:, None]], [v[None, :], np.array([[u]])]])
    D = rng.normal(size=(C, k + 1))
    counts = rng.integers(2, 40, size=C).astype(float)
    schur, delta = augmented_delta(np.linalg.inv(S_R), v, u, D[:, :k], D[:, k], counts)
    M = (D.T * counts) @ D
    direct = np.trace(np.linalg.solve(S, M)) - np.trace(np.linalg.solve(S_R, M[:k, :k]))
    return schur, delta, float(direct)


def test_criterion_3_sign_law():
    rng = np.random.default_rng(3)
    tol = 1e-10
    violations = mismatches = pos = neg = 0
    # real scatter matrices: the Schur complement is a within-class variance, hence >= 0
    while pos < 800:
        d = random_dataset(rng, n=int(rng.integers(60, 201)), p=int(rng.integers(3, 16)))
        cache = ScatterCache.build(d)
        state = init_state(cache, 0)
        for f in range(1, d.p):
            cand = evaluate_add(state, f)
            pos += cand.schur > tol
            violations += cand.schur > tol and cand.delta < -1e-10
            if rng.random() < 0.5:
                state = commit_add(state, cand)
    # synthetic partitioned matrices of both Schur signs, checked against a direct solve
    for i in range(800):
        schur, delta, direct = _partitioned_trial(rng, negative=i % 2 == 0)
        if schur > tol:
            pos += 1
            violations += delta < -1e-10
        elif schur < -tol:
            neg += 1
            violations += delta >= 1e-10
        mismatches += abs(delta - direct) > 1e-8 * max(1.0, abs(direct))
    trials = pos + neg
    ok = violations == 0 and mismatches == 0 and trials >= 1000 and neg >= 100
    verdict(3, ok, f"{trials} trials ({pos} positive, {neg} negative Schur), {violations} sign violations, "
                   f"{mismatches} mismatches against direct solve")
    assert ok


def test_criterion_4_ols_never_increases_sse():
    rng = np.random.default_rng(4)
    violations = trials = 0
    worst = -np.inf
    while trials < 1500:
        n = int(rng.integers(8, 60))
        k = int(rng.integers(1, 6))
        m = int(rng.integers(1, 4))
        if k + m > n:
            continue
        X = rng.normal(size=(n, k)) * rng.uniform(0.1, 10.0, size=k)
        T = rng.normal(size=(n, m))
        y = X @ rng.normal(size=k) + rng.normal(size=n)
        increase = ols_sse(np.hstack([X, T]), y) - ols_sse(X, y)
        worst = max(worst, increase)
        violations += increase > 1e-9
        trials += 1
    ok = violations == 0
    verdict(4, ok, f"{trials} full-rank regressions, {violations} violations, largest SSE change {worst:.2e}")
    assert ok


def test_criterion_5_pfst_degenerates_to_forward():
    rng = np.random.default_rng(5)
    instances = equal = multi = 0
    for _ in range(30):
        d = random_dataset(rng, n=int(rng.integers(100, 201)), p=int(rng.integers(2, 21)), shift=0.5)
        rule = StopRule(alpha=0.01, beta=0.0)
        try:
            fwd = forward_select(d, rule=rule).selected
        except PfstError:  # both must agree on failure too
            fwd = None
        cfg = PfstConfig(alpha=0.01, beta=0.0, gamma=0.0, blocks=1, max_ref=0, standardize=False)
        try:
            par = pfst_select(d, cfg).selected
        except PfstError:
            par = None
        instances += 1
        equal += fwd == par
        multi += fwd is not None and len(fwd) > 1
    ok = equal == instances and instances >= 20
    verdict(5, ok, f"{equal}/{instances} instances identical ({multi} with more than one feature selected)")
    assert ok


def test_criterion_6_breast_cancer(breast_cancer):
    cfg = PfstConfig(alpha=0.05, beta=0.01, gamma=0.05, blocks=1, standardize=True)
    t0 = time.perf_counter()
    report = pfst_select(breast_cancer, cfg)
    error = kfold_cv(standardize(breast_cancer), report.selected, k=5, seed=0).mean_error
    elapsed = time.perf_counter() - t0
    k = len(report.selected)
    ok = 2 <= k <= 6 and error <= 0.08 and elapsed < 5.0
    verdict(6, ok, f"{k} features {list(report.names)} (2..6), 5-fold LDA error {error:.4f} (<= 0.08), "
                   f"{elapsed:.2f}s (< 5s) [blocks=1, max_ref={cfg.max_ref}]")
    assert ok


def test_criterion_7_relative_speed(synthetic_500):
    data, truth = synthetic_500
    spec = RunSpec()
    prepared = prepare_data(data, spec)
    times = {"pfst": [], "backward": []}
    selected = None
    for _ in range(3):
        for method in times:
            s = RunSpec(method=method)
            t0 = time.perf_counter()
            report = select_features(prepared, s)
            times[method].append(time.perf_counter() - t0)
            if method == "pfst":
                selected = report.selected
    med = {m: statistics.median(v) for m, v in times.items()}
    recall = len(set(truth.informative) & set(selected))
    ok = med["pfst"] < med["backward"] and recall >= 4
    verdict(7, ok, f"median PFST {med['pfst'] * 1e3:.1f} ms < backward {med['backward'] * 1e3:.1f} ms; "
                   f"recall {recall}/5 (>= 4)")
    assert ok


def test_criterion_8_cli_determinism(tmp_path, breast_cancer):
    path = tmp_path / "bc.csv"
    write_csv(breast_cancer, path)
    payloads = []
    for i in range(2):
        out = tmp_path / f"run{i}.json"
        code = main(["select", str(path), "--method", "pfst", "--alpha", "0.05", "--gamma", "0.05",
                     "--beta", "0.01", "--cv", "5", "--seed", "7", "--blocks", "2", "-o", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        payloads.append((json.dumps(doc["selection"]["selected"]), json.dumps(doc["cv"]["fold_errors"])))
    ok = payloads[0] == payloads[1]
    verdict(8, ok, f"selected {payloads[0][0]} and fold errors byte-identical across two runs: {ok}")
    assert ok


def test_criterion_9_scale_invariance(synthetic_500):
    data, truth = synthetic_500
    cfg = PfstConfig()
    base = pfst_select(data, cfg).selected
    rng = np.random.default_rng(9)
    columns = sorted(set(truth.informative) | set(rng.choice(data.p, 25, replace=False).tolist()))
    changed = []
    for j in columns:
        X = data.features.copy()
        X[:, j] *= 1000.0
        if pfst_select(data.with_features(X), cfg).selected != base:
            changed.append(j)
    ok = not changed
    verdict(9, ok, f"{len(columns)} single-column x1000 rescalings (all planted columns included), "
                   f"{len(changed)} changed the selection {changed if changed else ''}".rstrip())
    assert ok
