"""Whitened linear discriminant analysis.

Fitting runs in three stages:

1. Whiten raw features with the pseudo-inverse square root of their
   within-class scatter.
2. Re-estimate the scatter matrices on whitened features and solve the
   ridge-regularized Fisher problem ``(S_w + r I)^-1 S_b w = f w`` through the
   congruent symmetric matrix ``R^-1/2 S_b R^-1/2``.
3. Keep the top ``n_disc`` discriminants ``W`` (discriminative space) and the
   orthogonal complement of their span (residual space), plus the ID centers
   in both spaces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateModel, DimMismatch
from .linalg import as_matrix, pinv_sqrt, symmetric_eig
from .stats import DatasetStats, LabeledFeatures, balanced_subsample, fit_stats

logger = logging.getLogger(__name__)

DEGENERATE_FISHER = 1e-12
Q_REL_TOL = 1e-10


@dataclass(frozen=True)
class WldaConfig:
    n_disc: int
    alpha: float = 1.0
    ridge_rel: float = 1e-3
    whiten_rel_tol: float = 1e-10
    n_fit: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.n_disc < 1:
            raise ValueError(f"n_disc must be >= 1, got {self.n_disc}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.ridge_rel > 0:
            raise ValueError(f"ridge_rel must be > 0, got {self.ridge_rel}")
        if not 0 < self.whiten_rel_tol < 1:
            raise ValueError(f"whiten_rel_tol must lie in (0, 1), got {self.whiten_rel_tol}")
        if self.n_fit < 1:
            raise ValueError(f"n_fit must be >= 1, got {self.n_fit}")

    @classmethod
    def for_dim(cls, dim: int, **overrides) -> "WldaConfig":
        """Defaults by feature width: D >= 1024 uses 1000 discriminants and
        alpha 5, narrower features use ``min(500, D - 1)`` and alpha 1."""
        if dim >= 1024:
            base = {"n_disc": 1000, "alpha": 5.0}
        else:
            base = {"n_disc": max(1, min(500, dim - 1)), "alpha": 1.0}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


@dataclass(frozen=True)
class WldaModel:
    whitener: np.ndarray  # D x D
    discriminants: np.ndarray  # D x n_disc, unit columns
    fisher_values: np.ndarray  # n_disc, descending
    q_basis: np.ndarray  # D x r_W, orthonormal basis of col(W)
    wd_class_centers: np.ndarray  # C x n_disc
    wdr_center: np.ndarray  # D
    config: WldaConfig

    @property
    def dim(self) -> int:
        return self.whitener.shape[0]

    @property
    def n_classes(self) -> int:
        return self.wd_class_centers.shape[0]

    def with_alpha(self, alpha: float) -> "WldaModel":
        return replace(self, config=replace(self.config, alpha=float(alpha)))


@dataclass(frozen=True)
class WldaSolution:
    """Full discriminant basis, kept so ``n_disc`` can be changed without refitting."""

    config: WldaConfig
    whitener: np.ndarray
    all_discriminants: np.ndarray  # D x D
    all_fisher_values: np.ndarray
    white_class_means: np.ndarray  # C x D
    white_global_mean: np.ndarray
    white_stats: DatasetStats = field(repr=False)

    def model(self, n_disc: int | None = None, alpha: float | None = None) -> WldaModel:
        config = self.config
        if n_disc is not None:
            config = replace(config, n_disc=int(n_disc))
        if alpha is not None:
            config = replace(config, alpha=float(alpha))
        d = self.whitener.shape[0]
        if config.n_disc > d:
            raise DimMismatch(f"n_disc={config.n_disc} exceeds feature dimension {d}")
        w = np.ascontiguousarray(self.all_discriminants[:, : config.n_disc])
        q = orthonormal_span(w)
        centers = self.white_class_means @ w
        g_mean = self.white_global_mean
        wdr_center = g_mean - q @ (q.T @ g_mean)
        return WldaModel(
            whitener=self.whitener,
            discriminants=w,
            fisher_values=self.all_fisher_values[: config.n_disc].copy(),
            q_basis=q,
            wd_class_centers=centers,
            wdr_center=wdr_center,
            config=config,
        )


def orthonormal_span(w: np.ndarray) -> np.ndarray:
    """Eigenvectors of ``W W^T`` with eigenvalue above ``1e-10 * lam_max``.

    Computed from the thin SVD of ``W``: the left singular vectors are those
    eigenvectors and the squared singular values their eigenvalues.
    """
    if w.shape[1] == 0:
        return np.zeros((w.shape[0], 0))
    u, s, _ = np.linalg.svd(w, full_matrices=False)
    lam = s**2
    keep = lam > Q_REL_TOL * lam[0]
    return np.ascontiguousarray(u[:, keep])


def solve_discriminants(s_w: np.ndarray, s_b: np.ndarray, ridge_rel: float):
    """Unit-norm discriminants (columns) and generalized eigenvalues, descending."""
    d = s_w.shape[0]
    ridge = ridge_rel * np.trace(s_w) / d
    if ridge <= 0:
        ridge = ridge_rel
    r_isqrt = pinv_sqrt(s_w + ridge * np.eye(d), rel_tol=1e-15)
    m = r_isqrt @ s_b @ r_isqrt
    eig = symmetric_eig(0.5 * (m + m.T))
    w = r_isqrt @ eig.eigenvectors
    w /= np.linalg.norm(w, axis=0)
    return w, eig.eigenvalues


def solve(data: LabeledFeatures, config: WldaConfig) -> WldaSolution:
    """Whiten, re-estimate scatter, and solve for every discriminant."""
    if config.n_disc > data.dim:
        raise DimMismatch(f"n_disc={config.n_disc} exceeds feature dimension {data.dim}")
    subset = balanced_subsample(data, config.n_fit, config.seed)
    raw_stats = fit_stats(subset)
    whitener = pinv_sqrt(raw_stats.s_w, config.whiten_rel_tol)
    white = LabeledFeatures(subset.features @ whitener, subset.labels, subset.n_classes)
    stats = fit_stats(white)
    w_all, fisher = solve_discriminants(stats.s_w, stats.s_b, config.ridge_rel)
    if fisher[0] <= DEGENERATE_FISHER:
        raise DegenerateModel(
            f"largest Fisher value {fisher[0]:.3e}: classes are not separable in any direction"
        )
    logger.debug(
        "fitted WLDA on %d samples, D=%d, C=%d, top Fisher %.4g",
        subset.n_samples, data.dim, data.n_classes, fisher[0],
    )
    return WldaSolution(
        config=config,
        whitener=whitener,
        all_discriminants=w_all,
        all_fisher_values=fisher,
        white_class_means=stats.class_means,
        white_global_mean=stats.global_mean,
        white_stats=stats,
    )


def fit(data: LabeledFeatures, config: WldaConfig) -> WldaModel:
    return solve(data, config).model()


def _rows(model: WldaModel, x_raw) -> tuple[np.ndarray, bool]:
    x = np.asarray(x_raw, dtype=np.float64)
    single = x.ndim == 1
    x = as_matrix(x, "features")
    if x.shape[1] != model.dim:
        raise DimMismatch(f"features have {x.shape[1]} columns, model expects {model.dim}")
    return x, single


def whiten(model: WldaModel, x_raw) -> np.ndarray:
    x, single = _rows(model, x_raw)
    out = x @ model.whitener
    return out[0] if single else out


def project_wd(model: WldaModel, x_raw) -> np.ndarray:
    """Discriminative-space coordinates ``W^T (whitener z)``."""
    x, single = _rows(model, x_raw)
    out = (x @ model.whitener) @ model.discriminants
    return out[0] if single else out


def project_wdr(model: WldaModel, x_raw) -> np.ndarray:
    """Residual of the whitened feature after removing its part in ``col(W)``."""
    x, single = _rows(model, x_raw)
    xw = x @ model.whitener
    q = model.q_basis
    out = xw - (xw @ q) @ q.T
    return out[0] if single else out
