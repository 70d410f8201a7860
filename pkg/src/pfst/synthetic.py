"""Seeded Gaussian class blobs with planted informative, redundant and noise columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scatter import Dataset


@dataclass(frozen=True)
class SyntheticTruth:
    informative: tuple[int, ...]
    redundant: tuple[int, ...]
    noise: tuple[int, ...]


def make_blobs(n: int = 1000, p: int = 500, n_informative: int = 5, *, n_redundant: int = 0,
               n_classes: int = 2, separation: float = 1.0, redundant_noise: float = 0.1,
               shuffle: bool = True, seed: int = 0) -> tuple[Dataset, SyntheticTruth]:
    """Classification data with known ground truth.

    Informative columns are unit-variance Gaussians around random class means,
    rescaled so every informative column has a root-mean-square class-mean
    spread of exactly ``separation``.  Redundant columns are random linear
    combinations of the informative ones plus ``redundant_noise`` Gaussian
    noise; the rest is class-independent standard normal noise.  Classes are as
    balanced as ``n`` allows.  With ``shuffle`` the columns are permuted and the
    returned truth refers to the permuted positions.
    """
    if n_informative + n_redundant > p:
        raise ValueError("more planted columns than p")
    if n_classes < 2 or n < 2 * n_classes:
        raise ValueError("need at least two classes with two samples each")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    centers = rng.normal(size=(n_classes, n_informative))
    centers -= centers.mean(axis=0)
    centers *= separation / np.sqrt((centers ** 2).mean(axis=0))
    inf = centers[labels] + rng.standard_normal((n, n_informative))
    mix = rng.normal(size=(n_informative, n_redundant))
    red = inf @ mix + redundant_noise * rng.standard_normal((n, n_redundant))
    noise = rng.standard_normal((n, p - n_informative - n_redundant))
    X = np.hstack([inf, red, noise])
    kinds = np.array([0] * n_informative + [1] * n_redundant + [2] * noise.shape[1])
    if shuffle:
        perm = rng.permutation(p)
        X = X[:, perm]
        kinds = kinds[perm]
    truth = SyntheticTruth(*(tuple(int(j) for j in np.flatnonzero(kinds == k)) for k in range(3)))
    return Dataset(X, labels, class_names=tuple(f"class{c}" for c in range(n_classes))), truth
