"""Toy 2D classification datasets and their evaluation windows.

Conventions: two moons use additive Gaussian noise 0.1; Gaussian quantiles are
equal-size radius shells of a standard 2D Gaussian; random uniform points on
``[-0.5, 4.5]^2`` are labeled by the line ``x1 + x2 = 4``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_gaussian_quantiles, make_moons

MOONS_NOISE = 0.1
UNIFORM_LOW, UNIFORM_HIGH = -0.5, 4.5
UNIFORM_SPLIT = 4.0

# window centre and radius used for the single-layer and deep count experiments
WINDOWS = {
    "gauss-quantiles": ((0.0, 0.0), 1.0),
    "two-moons": ((0.5, 0.5), 1.5),
    "random-uniform": ((2.0, 2.0), 2.5),
}


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str
    seed: int
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=int)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("need X of shape (n, d) and y of shape (n,)")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset has non-finite inputs")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError("labels out of range")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.X.mean(axis=0)

    def class_centroids(self) -> np.ndarray:
        return np.array([self.X[self.y == c].mean(axis=0) for c in range(self.n_classes)])

    def class_priors(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes) / len(self)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.name, self.seed, self.n_classes)

    def split(self, val_frac: float = 0.25):
        """Held-out split drawn with the dataset seed: ``(train, val)``."""
        if not 0 <= val_frac < 1:
            raise ValueError("val_frac must lie in [0, 1)")
        perm = np.random.default_rng(self.seed).permutation(len(self))
        n_val = int(round(val_frac * len(self)))
        return self.subset(np.sort(perm[n_val:])), self.subset(np.sort(perm[:n_val]))


def gen_two_moons(n: int = 200, noise: float = MOONS_NOISE, seed: int = 0) -> Dataset:
    X, y = make_moons(n_samples=n, noise=noise if noise > 0 else None, random_state=seed)
    return Dataset(X, y, "two-moons", seed, 2)


def gen_gaussian_quantiles(n: int = 200, classes: int = 5, seed: int = 0) -> Dataset:
    if n < classes:
        raise ValueError("need at least one sample per class")
    X, y = make_gaussian_quantiles(n_samples=n, n_features=2, n_classes=classes, random_state=seed)
    return Dataset(X, y, "gauss-quantiles", seed, classes)


def gen_random_uniform(n: int = 200, seed: int = 0) -> Dataset:
    X = np.random.default_rng(seed).uniform(UNIFORM_LOW, UNIFORM_HIGH, size=(n, 2))
    y = (X.sum(axis=1) > UNIFORM_SPLIT).astype(int)
    return Dataset(X, y, "random-uniform", seed, 2)


GENERATORS = {
    "two-moons": gen_two_moons,
    "gauss-quantiles": gen_gaussian_quantiles,
    "random-uniform": gen_random_uniform,
}


def make_dataset(name: str, n: int = 200, seed: int = 0) -> Dataset:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(n=n, seed=seed)


def sample_reference_batch(data: Dataset, size: int, seed: int) -> np.ndarray:
    """Rows drawn uniformly without replacement, in draw order."""
    if size > len(data):
        raise ValueError("reference batch larger than the dataset")
    idx = np.random.default_rng(seed).choice(len(data), size=size, replace=False)
    return data.X[idx]
