"""Class-conditional statistics of a labeled feature matrix.

Scatter matrices are raw sums, not covariances:

    S_w = sum_i (x_i - mu_{y_i})(x_i - mu_{y_i})^T
    S_b = sum_c N_c (mu_c - mu)(mu_c - mu)^T
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimMismatch, EmptyClass, NonFinite
from .linalg import as_matrix

CHUNK_ROWS = 65536


@dataclass(frozen=True)
class LabeledFeatures:
    """Features (N x D, float64) with integer labels in ``[0, n_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    @classmethod
    def from_arrays(cls, features, labels, n_classes: int | None = None) -> "LabeledFeatures":
        x = as_matrix(features, "features")
        y = np.asarray(labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DimMismatch(
                f"labels of shape {y.shape} do not match {x.shape[0]} feature rows"
            )
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.isfinite(y)) or not np.all(y == np.round(y)):
                raise NonFinite("labels must be integers")
        y = y.astype(np.int64)
        if y.size and y.min() < 0:
            raise DimMismatch("labels must be non-negative")
        if n_classes is None:
            n_classes = int(y.max()) + 1 if y.size else 0
        elif y.size and y.max() >= n_classes:
            raise DimMismatch(f"label {int(y.max())} out of range for {n_classes} classes")
        return cls(x, y, int(n_classes))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, index: np.ndarray) -> "LabeledFeatures":
        return LabeledFeatures(
            np.ascontiguousarray(self.features[index]), self.labels[index], self.n_classes
        )


@dataclass(frozen=True)
class DatasetStats:
    class_means: np.ndarray  # C x D
    global_mean: np.ndarray  # D
    s_w: np.ndarray
    s_b: np.ndarray
    class_counts: np.ndarray
    total: int


def _require_nonempty(counts: np.ndarray) -> None:
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClass(f"classes without samples: {empty[:10].tolist()}")


def balanced_subsample(data: LabeledFeatures, n_target: int, seed: int) -> LabeledFeatures:
    """Draw up to ``n_target`` rows spread evenly over the classes.

    Each class gets ``n_target // C`` rows, and ``n_target % C`` randomly chosen
    classes get one more. Classes that are too small contribute all their rows;
    their shortfall is not redistributed. Selected rows keep their original order.
    """
    counts = data.class_counts()
    _require_nonempty(counts)
    c = data.n_classes
    if n_target < c:
        raise ValueError(f"n_target={n_target} is smaller than the number of classes {c}")
    if n_target >= data.n_samples:
        return data
    rng = np.random.default_rng(seed)
    quota = np.full(c, n_target // c, dtype=np.int64)
    quota[rng.permutation(c)[: n_target % c]] += 1

    order = np.argsort(data.labels, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    picked = []
    for cls in range(c):
        members = order[starts[cls] : starts[cls] + counts[cls]]
        if counts[cls] <= quota[cls]:
            picked.append(members)
        else:
            picked.append(members[rng.permutation(counts[cls])[: quota[cls]]])
    index = np.sort(np.concatenate(picked))
    return data.take(index)


def _one_hot(labels: np.ndarray, n_classes: int) -> sp.csr_matrix:
    n = labels.shape[0]
    return sp.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(n_classes, n))


def fit_stats(data: LabeledFeatures) -> DatasetStats:
    """Class means, global mean and both scatter matrices (two passes)."""
    x, y, c = data.features, data.labels, data.n_classes
    n, d = x.shape
    if d < 1:
        raise DimMismatch("features need at least one column")
    if c < 2:
        raise EmptyClass(f"need at least 2 classes, got {c}")
    counts = data.class_counts()
    _require_nonempty(counts)

    sums = np.asarray(_one_hot(y, c) @ x)
    class_means = sums / counts[:, None]
    global_mean = counts @ class_means / n

    s_w = np.zeros((d, d))
    for start in range(0, n, CHUNK_ROWS):
        stop = min(start + CHUNK_ROWS, n)
        centered = x[start:stop] - class_means[y[start:stop]]
        s_w += centered.T @ centered
    s_w = 0.5 * (s_w + s_w.T)

    diff = class_means - global_mean
    s_b = (diff * counts[:, None]).T @ diff
    s_b = 0.5 * (s_b + s_b.T)
    return DatasetStats(class_means, global_mean, s_w, s_b, counts, n)
