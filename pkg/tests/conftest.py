import numpy as np
import pytest

from pfst.scatter import Dataset


def random_dataset(rng: np.random.Generator, n: int | None = None, p: int | None = None,
                   C: int | None = None, shift: float = 1.0) -> Dataset:
    """Gaussian classes with random mean shifts and a random feature mixing."""
    C = C if C is not None else int(rng.integers(2, 6))
    p = p if p is not None else int(rng.integers(1, 21))
    n = n if n is not None else int(rng.integers(max(3 * C, p + C + 5), 201))
    labels = np.concatenate([np.arange(C), np.arange(C), rng.integers(0, C, n - 2 * C)])
    rng.shuffle(labels)
    centers = rng.normal(0, shift, size=(C, p))
    mix = np.eye(p) + 0.3 * rng.normal(size=(p, p))
    X = (centers[labels] + rng.normal(size=(n, p))) @ mix
    X = X * rng.uniform(0.5, 5.0, size=p) + rng.normal(0, 3, size=p)
    return Dataset(X, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def tiny():
    """One feature: class A = {0, 2}, class B = {4, 6}."""
    return Dataset(np.array([[0.0], [2.0], [4.0], [6.0]]), np.array([0, 0, 1, 1]))


@pytest.fixture(scope="session")
def breast_cancer() -> Dataset:
    sk = pytest.importorskip("sklearn.datasets")
    bc = sk.load_breast_cancer()
    return Dataset(bc.data, bc.target, tuple(bc.feature_names), tuple(bc.target_names))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
