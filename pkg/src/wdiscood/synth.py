"""Synthetic Gaussian-mixture ID/OOD benchmarks.

ID classes share the spherical covariance ``within_noise**2 * I``; class means
are random unit directions scaled to ``class_mean_scale``. Randomness comes
from numpy's PCG64 generator, with independent streams spawned from a single
``SeedSequence(seed)`` for class means, training data, ID test data and OOD
data, so every OOD kind sees the same ID samples for a given seed.

OOD kinds:

* ``mean_shift``: ID mixture samples moved by ``magnitude`` along a unit
  direction. ``subspace="discriminative"`` uses the top discriminant of a
  reference WLDA fitted on the training data, ``"residual"`` a direction the
  discriminative projection cannot see, ``"random"`` a random direction.
* ``covariance_scale``: the ID mixture with noise scaled by ``factor``.
* ``uniform_box``: uniform on ``[-half_width, half_width]^d``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .errors import NumericalError
from .linalg import pinv_psd
from .stats import LabeledFeatures
from .wlda import WldaConfig, WldaModel, fit

SUBSPACES = ("discriminative", "residual", "random")
KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class MeanShift:
    magnitude: float
    subspace: str = "random"
    kind: str = field(default="mean_shift", init=False)

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ValueError(f"magnitude must be >= 0, got {self.magnitude}")
        if self.subspace not in SUBSPACES:
            raise ValueError(f"subspace must be one of {SUBSPACES}, got {self.subspace!r}")


@dataclass(frozen=True)
class CovarianceScale:
    factor: float
    kind: str = field(default="covariance_scale", init=False)

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError(f"factor must be > 0, got {self.factor}")


@dataclass(frozen=True)
class UniformBox:
    half_width: float
    kind: str = field(default="uniform_box", init=False)

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width}")


OodKind = Union[MeanShift, CovarianceScale, UniformBox]


def parse_ood_kind(text: str) -> OodKind:
    """Parse ``mean_shift:<magnitude>[:<subspace>]``, ``covariance_scale:<factor>``
    or ``uniform_box:<half_width>``."""
    name, *args = text.split(":")
    try:
        if name == "mean_shift" and len(args) in (1, 2):
            return MeanShift(float(args[0]), *args[1:])
        if name == "covariance_scale" and len(args) == 1:
            return CovarianceScale(float(args[0]))
        if name == "uniform_box" and len(args) == 1:
            return UniformBox(float(args[0]))
    except ValueError as exc:
        raise ValueError(f"bad OOD kind {text!r}: {exc}") from exc
    raise ValueError(f"bad OOD kind {text!r}")


def ood_kind_label(kind: OodKind) -> str:
    if isinstance(kind, MeanShift):
        return f"mean_shift_{kind.subspace}_{kind.magnitude:g}"
    if isinstance(kind, CovarianceScale):
        return f"covariance_scale_{kind.factor:g}"
    return f"uniform_box_{kind.half_width:g}"


@dataclass(frozen=True)
class SynthSpec:
    d: int
    c: int
    n_per_class: int
    class_mean_scale: float = 3.0
    within_noise: float = 1.0
    seed: int = 0
    ood_kind: OodKind = MeanShift(0.0)
    n_ood: int = 2000
    n_test: int | None = None  # defaults to n_ood
    ref_n_disc: int | None = None  # discriminants of the reference model; defaults to c - 1

    def __post_init__(self):
        if self.d < 2 or self.c < 2:
            raise ValueError(f"need d >= 2 and c >= 2, got d={self.d}, c={self.c}")
        if self.n_per_class < 1 or self.n_ood < 1:
            raise ValueError("n_per_class and n_ood must be positive")
        if not (self.class_mean_scale > 0 and self.within_noise > 0):
            raise ValueError("class_mean_scale and within_noise must be > 0")

    @property
    def test_size(self) -> int:
        return self.n_ood if self.n_test is None else self.n_test

    @property
    def reference_n_disc(self) -> int:
        n = self.c - 1 if self.ref_n_disc is None else self.ref_n_disc
        return max(1, min(n, self.d - 1))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["ood_kind"] = asdict(self.ood_kind)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        doc = dict(doc)
        kind = dict(doc.pop("ood_kind", {"kind": "mean_shift", "magnitude": 0.0}))
        name = kind.pop("kind")
        ctor = {"mean_shift": MeanShift, "covariance_scale": CovarianceScale,
                "uniform_box": UniformBox}[name]
        return cls(ood_kind=ctor(**kind), **doc)


class SynthBenchmark(NamedTuple):
    id_train: LabeledFeatures
    id_test: np.ndarray
    ood: np.ndarray


def _streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def class_means(spec: SynthSpec) -> np.ndarray:
    rng = _streams(spec.seed)[0]
    dirs = rng.standard_normal((spec.c, spec.d))
    return spec.class_mean_scale * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _mixture(rng, means, n, noise, labels=None):
    if labels is None:
        labels = rng.integers(means.shape[0], size=n)
    x = means[labels] + noise * rng.standard_normal((n, means.shape[1]))
    return x, labels


def reference_model(spec: SynthSpec, id_train: LabeledFeatures) -> WldaModel:
    config = WldaConfig(n_disc=spec.reference_n_disc, n_fit=id_train.n_samples, seed=spec.seed)
    return fit(id_train, config)


def shift_direction(spec: SynthSpec, id_train: LabeledFeatures, subspace: str, rng) -> np.ndarray:
    """Unit raw-space direction for a subspace-targeted mean shift.

    The direction is built in whitened space and mapped back through the
    whitener's pseudo-inverse, so its whitened image lies in ``col(W)``
    (discriminative) or in the kernel of ``W^T`` (residual).
    """
    if subspace == "random":
        v = rng.standard_normal(spec.d)
        return v / np.linalg.norm(v)
    model = reference_model(spec, id_train)
    if subspace == "discriminative":
        white_dir = model.discriminants[:, 0]
    else:
        v = rng.standard_normal(spec.d)
        q = model.q_basis
        white_dir = v - q @ (q.T @ v)
    raw = pinv_psd(model.whitener, rel_tol=1e-12) @ white_dir
    raw /= np.linalg.norm(raw)
    white = model.whitener @ raw
    if subspace == "residual":
        leak = np.linalg.norm(model.discriminants.T @ white) / np.linalg.norm(white)
        if leak > KERNEL_TOL:
            raise NumericalError(f"residual shift leaks into the discriminants ({leak:.2e})")
    return raw


def generate(spec: SynthSpec) -> SynthBenchmark:
    """Training set, ID test set and one OOD set, fully determined by the spec."""
    _, rng_train, rng_test, rng_ood = _streams(spec.seed)
    means = class_means(spec)
    labels = np.repeat(np.arange(spec.c), spec.n_per_class)
    x_train, _ = _mixture(rng_train, means, labels.size, spec.within_noise, labels)
    id_train = LabeledFeatures(x_train, labels, spec.c)
    id_test, _ = _mixture(rng_test, means, spec.test_size, spec.within_noise)

    kind = spec.ood_kind
    if isinstance(kind, UniformBox):
        ood = rng_ood.uniform(-kind.half_width, kind.half_width, (spec.n_ood, spec.d))
    elif isinstance(kind, CovarianceScale):
        ood, _ = _mixture(rng_ood, means, spec.n_ood, spec.within_noise * kind.factor)
    else:
        ood, _ = _mixture(rng_ood, means, spec.n_ood, spec.within_noise)
        if kind.magnitude > 0:
            ood = ood + kind.magnitude * shift_direction(spec, id_train, kind.subspace, rng_ood)
    return SynthBenchmark(id_train, id_test, ood)
