"""Per-sample OOD scores. Every scorer is oriented so higher means more ID."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DimMismatch, KTooLarge, NonFinite, ZeroVector
from .linalg import as_matrix, pinv_psd, symmetric_eig
from .stats import LabeledFeatures, fit_stats
from .wlda import WldaModel, project_wd, project_wdr

SCORERS = ("wdiscood", "wd", "wdr", "maha", "knn", "pr", "msp", "energy", "maxlogit")
FEATURE_SCORERS = ("wdiscood", "wd", "wdr", "maha", "knn", "pr")
LOGIT_SCORERS = ("msp", "energy", "maxlogit")

# Upper bound on the number of distances held in memory at once.
_BLOCK_ELEMENTS = 1 << 23


@dataclass(frozen=True)
class ScoreVector:
    scorer_id: str
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise DimMismatch("score values must be a vector")
        if not np.isfinite(self.values).all():
            raise NonFinite(f"{self.scorer_id}: non-finite scores")

    def __len__(self):
        return self.values.shape[0]


def _min_distance(points: np.ndarray, centers: np.ndarray, metric="euclidean") -> np.ndarray:
    out = np.empty(points.shape[0])
    step = max(1, _BLOCK_ELEMENTS // max(1, centers.shape[0]))
    for start in range(0, points.shape[0], step):
        block = cdist(points[start : start + step], centers, metric=metric)
        out[start : start + step] = block.min(axis=1)
    return out


def _check_dim(features, dim: int, name: str = "features") -> np.ndarray:
    x = as_matrix(features, name)
    if x.shape[1] != dim:
        raise DimMismatch(f"{name} have {x.shape[1]} columns, model expects {dim}")
    return x


# -- WDiscOOD ----------------------------------------------------------------


def score_wd(model: WldaModel, features) -> ScoreVector:
    """Negated distance to the nearest class center in the discriminative space."""
    g = project_wd(model, _check_dim(features, model.dim))
    return ScoreVector("wd", -_min_distance(g, model.wd_class_centers))


def score_wdr(model: WldaModel, features) -> ScoreVector:
    """Negated distance to the ID center in the residual space."""
    h = project_wdr(model, _check_dim(features, model.dim))
    return ScoreVector("wdr", -np.linalg.norm(h - model.wdr_center, axis=1))


def score_wdiscood(model: WldaModel, features, alpha: float | None = None) -> ScoreVector:
    """``s_wd + alpha * s_wdr``; alpha defaults to the model's configured value."""
    alpha = model.config.alpha if alpha is None else float(alpha)
    s_g = score_wd(model, features).values
    if alpha == 0:
        return ScoreVector("wdiscood", s_g)
    s_h = score_wdr(model, features).values
    return ScoreVector("wdiscood", s_g + alpha * s_h)


# -- Mahalanobis --------------------------------------------------------------


@dataclass(frozen=True)
class MahaModel:
    class_means: np.ndarray
    shared_precision: np.ndarray


def fit_maha(data: LabeledFeatures) -> MahaModel:
    """Class means and the pseudo-inverse of the pooled covariance ``S_w / (N - C)``."""
    if data.n_samples <= data.n_classes:
        raise DimMismatch(
            f"need more samples ({data.n_samples}) than classes ({data.n_classes})"
        )
    stats = fit_stats(data)
    cov = stats.s_w / (stats.total - data.n_classes)
    return MahaModel(stats.class_means, pinv_psd(cov, rel_tol=1e-10))


def score_maha(model: MahaModel, features) -> ScoreVector:
    """Negated squared Mahalanobis distance to the closest class mean."""
    x = _check_dim(features, model.class_means.shape[1])
    eig = symmetric_eig(model.shared_precision)
    keep = eig.eigenvalues > 1e-12 * max(eig.eigenvalues[0], 0.0)
    root = eig.eigenvectors[:, keep] * np.sqrt(eig.eigenvalues[keep])
    d2 = _min_distance(x @ root, model.class_means @ root, metric="sqeuclidean")
    return ScoreVector("maha", -d2)


# -- KNN ------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnIndex:
    bank: np.ndarray
    k: int


def _unit_rows(x: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"{name}: {int(np.sum(norms == 0))} zero-norm rows")
    return x / norms[:, None]


def fit_knn(features, k: int = 10) -> KnnIndex:
    bank = _unit_rows(as_matrix(features, "knn bank"), "knn bank")
    if not 1 <= k <= bank.shape[0]:
        raise KTooLarge(f"k={k} but the bank holds {bank.shape[0]} rows")
    return KnnIndex(bank, int(k))


def score_knn(index: KnnIndex, features) -> ScoreVector:
    """Negated distance from each unit-normalized query to its k-th nearest bank row."""
    q = _unit_rows(_check_dim(features, index.bank.shape[1]), "queries")
    k = index.k
    out = np.empty(q.shape[0])
    step = max(1, _BLOCK_ELEMENTS // index.bank.shape[0])
    for start in range(0, q.shape[0], step):
        dist = cdist(q[start : start + step], index.bank)
        out[start : start + step] = np.partition(dist, k - 1, axis=1)[:, k - 1]
    return ScoreVector("knn", -out)


# -- Principal residual -------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    principal_basis: np.ndarray


def default_n_pc(dim: int) -> int:
    """About D/8 principal components (256 for 2048-D features)."""
    return max(1, min(dim - 1, dim // 8))


def fit_pca(features, n_pc: int) -> PcaModel:
    x = as_matrix(features, "pca features")
    d = x.shape[1]
    if not 1 <= n_pc < d:
        raise DimMismatch(f"n_pc must lie in [1, {d}), got {n_pc}")
    mean = x.mean(axis=0)
    centered = x - mean
    eig = symmetric_eig(centered.T @ centered / x.shape[0])
    return PcaModel(mean, np.ascontiguousarray(eig.eigenvectors[:, :n_pc]))


def score_pr(model: PcaModel, features) -> ScoreVector:
    """Negated norm of the residual after projecting onto the principal subspace."""
    x = _check_dim(features, model.mean.shape[0]) - model.mean
    p = model.principal_basis
    resid = x - (x @ p) @ p.T
    return ScoreVector("pr", -np.linalg.norm(resid, axis=1))


# -- Logit-space ----------------------------------------------------------------


def _logits(logits) -> np.ndarray:
    return as_matrix(logits, "logits")


def score_msp(logits) -> ScoreVector:
    z = _logits(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    return ScoreVector("msp", 1.0 / np.exp(shifted).sum(axis=1))


def score_energy(logits, temperature: float = 1.0) -> ScoreVector:
    """``T * log sum exp(l / T)``, the negated free energy."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = _logits(logits)
    return ScoreVector("energy", temperature * logsumexp(z / temperature, axis=1))


def score_maxlogit(logits) -> ScoreVector:
    return ScoreVector("maxlogit", _logits(logits).max(axis=1))
