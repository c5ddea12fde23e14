"""File formats.

All binary formats are little-endian regardless of host.

FMAT (feature / score matrix)::

    magic "FMAT" | version u32 | rows u64 | cols u64 | dtype u32 (0=f32, 1=f64)
    payload: rows*cols values, row-major

LVEC (labels)::

    magic "LVEC" | version u32 | count u64 | payload: count x i32

WLDA (fitted model)::

    magic "WLDA" | version u32
    config: n_disc u64 | alpha f64 | ridge_rel f64 | whiten_rel_tol f64 | n_fit u64 | seed i64
    dims:   D u64 | C u64 | n_disc u64 | r_W u64
    six matrix blocks, each rows u64 | cols u64 | rows*cols f64:
        whitener, discriminants, fisher_values (1 x n_disc), q_basis,
        wd_class_centers, wdr_center (1 x D)
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Iterator

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    ManifestError,
    NonFinite,
    TruncatedPayload,
    VersionUnsupported,
)
from .wlda import WldaConfig, WldaModel

FORMAT_VERSION = 1
MANIFEST_SCHEMA = 1

_FMAT_HEADER = struct.Struct("<4sIQQI")
_LVEC_HEADER = struct.Struct("<4sIQ")
_WLDA_HEADER = struct.Struct("<4sI")
_WLDA_CONFIG = struct.Struct("<QdddQq")
_WLDA_DIMS = struct.Struct("<QQQQ")
_BLOCK = struct.Struct("<QQ")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@contextmanager
def atomic_write(path: str | os.PathLike, mode: str = "wb") -> Iterator[Any]:
    """Write to a temporary sibling file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh: BinaryIO, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedPayload(f"{path}: expected {n} bytes, found {len(buf)}")
    return buf


def _check_magic(magic: bytes, expected: bytes, version: int, path) -> None:
    if magic != expected:
        raise BadMagic(f"{path}: magic {magic!r}, expected {expected!r}")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format version {version} is not supported")


# -- features -------------------------------------------------------------------


def write_features(path, matrix, dtype: str = "f64") -> None:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise DimMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    code = {"f32": 0, "f64": 1}[dtype]
    payload = np.ascontiguousarray(m, dtype=_DTYPES[code])
    with atomic_write(path) as fh:
        fh.write(_FMAT_HEADER.pack(b"FMAT", FORMAT_VERSION, m.shape[0], m.shape[1], code))
        fh.write(payload.tobytes())


def read_features(path) -> np.ndarray:
    """Load an FMAT file (or a CSV, by suffix) as a float64 matrix."""
    if str(path).lower().endswith(".csv"):
        return read_features_csv(path)[0]
    with open(path, "rb") as fh:
        magic, version, rows, cols, code = _FMAT_HEADER.unpack(
            _read_exact(fh, _FMAT_HEADER.size, path)
        )
        _check_magic(magic, b"FMAT", version, path)
        if code not in _DTYPES:
            raise VersionUnsupported(f"{path}: unknown dtype code {code}")
        dt = _DTYPES[code]
        raw = _read_exact(fh, rows * cols * dt.itemsize, path)
    m = np.frombuffer(raw, dtype=dt).reshape(rows, cols).astype(np.float64)
    if not np.isfinite(m).all():
        raise NonFinite(f"{path}: payload contains NaN or Inf")
    return m


def feature_shape(path) -> tuple[int, int]:
    """``(rows, cols)`` of a feature file, reading only the FMAT header."""
    if str(path).lower().endswith(".csv"):
        return read_features_csv(path)[0].shape
    with open(path, "rb") as fh:
        magic, version, rows, cols, _ = _FMAT_HEADER.unpack(
            _read_exact(fh, _FMAT_HEADER.size, path)
        )
    _check_magic(magic, b"FMAT", version, path)
    return rows, cols


def read_features_csv(path, labels_last: bool = False):
    """One sample per line; with ``labels_last`` the final column holds labels."""
    try:
        data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, comments="#")
    except ValueError as exc:
        raise NonFinite(f"{path}: {exc}") from exc
    if not np.isfinite(data).all():
        raise NonFinite(f"{path}: contains NaN or Inf")
    if not labels_last:
        return data, None
    if data.shape[1] < 2:
        raise DimMismatch(f"{path}: need at least one feature column plus labels")
    labels = data[:, -1]
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise DimMismatch(f"{path}: label column must hold non-negative integers")
    return np.ascontiguousarray(data[:, :-1]), labels.astype(np.int64)


# -- labels -----------------------------------------------------------------------


def write_labels(path, labels) -> None:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise DimMismatch(f"labels must be a vector, got shape {y.shape}")
    if y.size and y.min() < 0:
        raise DimMismatch("labels must be non-negative")
    with atomic_write(path) as fh:
        fh.write(_LVEC_HEADER.pack(b"LVEC", FORMAT_VERSION, y.size))
        fh.write(y.astype("<i4").tobytes())


def read_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, count = _LVEC_HEADER.unpack(_read_exact(fh, _LVEC_HEADER.size, path))
        _check_magic(magic, b"LVEC", version, path)
        raw = _read_exact(fh, 4 * count, path)
    y = np.frombuffer(raw, dtype="<i4").astype(np.int64)
    if y.size and y.min() < 0:
        raise DimMismatch(f"{path}: negative label")
    return y


# -- scores -------------------------------------------------------------------------


def write_scores_csv(path, scorer: str, values) -> None:
    with atomic_write(path, "w") as fh:
        fh.write("sample_index,scorer,score\n")
        for i, v in enumerate(np.asarray(values, dtype=np.float64).tolist()):
            fh.write(f"{i},{scorer},{v!r}\n")


def write_scores(path, values) -> None:
    write_features(path, np.asarray(values, dtype=np.float64)[:, None])


def read_scores(path) -> np.ndarray:
    m = read_features(path)
    if m.shape[1] != 1:
        raise DimMismatch(f"{path}: score files have one column, found {m.shape[1]}")
    return m[:, 0]


# -- WLDA model -------------------------------------------------------------------------


def _write_block(fh, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    fh.write(_BLOCK.pack(*a.shape))
    fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_block(fh, path, shape: tuple[int, int]) -> np.ndarray:
    rows, cols = _BLOCK.unpack(_read_exact(fh, _BLOCK.size, path))
    if (rows, cols) != shape:
        raise DimMismatch(f"{path}: block of shape {(rows, cols)}, expected {shape}")
    raw = _read_exact(fh, 8 * rows * cols, path)
    return np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_model(path, model: WldaModel) -> None:
    cfg = model.config
    d, c = model.dim, model.n_classes
    with atomic_write(path) as fh:
        fh.write(_WLDA_HEADER.pack(b"WLDA", FORMAT_VERSION))
        fh.write(
            _WLDA_CONFIG.pack(
                cfg.n_disc, cfg.alpha, cfg.ridge_rel, cfg.whiten_rel_tol, cfg.n_fit, cfg.seed
            )
        )
        fh.write(_WLDA_DIMS.pack(d, c, model.discriminants.shape[1], model.q_basis.shape[1]))
        for block in (
            model.whitener,
            model.discriminants,
            model.fisher_values[None, :],
            model.q_basis,
            model.wd_class_centers,
            model.wdr_center[None, :],
        ):
            _write_block(fh, block)


def read_model(path) -> WldaModel:
    with open(path, "rb") as fh:
        magic, version = _WLDA_HEADER.unpack(_read_exact(fh, _WLDA_HEADER.size, path))
        _check_magic(magic, b"WLDA", version, path)
        n_disc, alpha, ridge_rel, tol, n_fit, seed = _WLDA_CONFIG.unpack(
            _read_exact(fh, _WLDA_CONFIG.size, path)
        )
        d, c, nd, r = _WLDA_DIMS.unpack(_read_exact(fh, _WLDA_DIMS.size, path))
        whitener = _read_block(fh, path, (d, d))
        w = _read_block(fh, path, (d, nd))
        fisher = _read_block(fh, path, (1, nd))[0]
        q = _read_block(fh, path, (d, r))
        centers = _read_block(fh, path, (c, nd))
        wdr_center = _read_block(fh, path, (1, d))[0]
        if fh.read(1):
            raise DimMismatch(f"{path}: trailing bytes after model payload")
    config = WldaConfig(
        n_disc=n_disc, alpha=alpha, ridge_rel=ridge_rel, whiten_rel_tol=tol,
        n_fit=n_fit, seed=seed,
    )
    return WldaModel(whitener, w, fisher, q, centers, wdr_center, config)


# -- manifest ---------------------------------------------------------------------------


@dataclass
class DatasetRef:
    name: str
    features: Path
    logits: Path | None = None
    key: str = ""


@dataclass
class Manifest:
    """Experiment description loaded from JSON.

    Paths are resolved relative to the manifest's directory.
    """

    path: Path
    train_features: Path
    train_labels: Path | None
    id_test: DatasetRef
    ood_sets: list[DatasetRef]
    scorers: list[str]
    wlda: dict[str, Any] = field(default_factory=dict)
    knn_k: int = 10
    n_pc: int | None = None
    temperature: float = 1.0
    output_dir: Path = Path("out")
    seed: int = 0


def _resolve(base: Path, value, key: str, required: bool = True) -> Path | None:
    if value is None:
        if required:
            raise ManifestError(f"manifest entry {key!r} is missing")
        return None
    if not isinstance(value, str):
        raise ManifestError(f"manifest entry {key!r} must be a path string")
    p = (base / value).resolve()
    if not p.exists():
        raise ManifestError(f"manifest entry {key!r}: file not found: {p}")
    return p


def read_manifest(path) -> Manifest:
    from .scoring import SCORERS

    path = Path(path).resolve()
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(f"{path}: unsupported manifest schema {doc.get('schema')!r}")
    base = path.parent

    train = doc.get("id_train") or {}
    train_features = _resolve(base, train.get("features"), "id_train.features")
    train_labels = _resolve(base, train.get("labels"), "id_train.labels", required=False)
    if train_labels is None and train_features.suffix.lower() != ".csv":
        raise ManifestError("manifest entry 'id_train.labels' is missing")

    test = doc.get("id_test") or {}
    id_test = DatasetRef(
        "id",
        _resolve(base, test.get("features"), "id_test.features"),
        _resolve(base, test.get("logits"), "id_test.logits", required=False),
        "id_test",
    )
    ood_sets = []
    names = set()
    for i, entry in enumerate(doc.get("ood_sets") or []):
        key = f"ood_sets[{i}]"
        name = entry.get("name")
        if not name or not isinstance(name, str) or name in names or name == "id":
            raise ManifestError(f"manifest entry {key}.name must be a unique non-empty string")
        names.add(name)
        ood_sets.append(
            DatasetRef(
                name,
                _resolve(base, entry.get("features"), f"{key}.features"),
                _resolve(base, entry.get("logits"), f"{key}.logits", required=False),
                key,
            )
        )
    if not ood_sets:
        raise ManifestError("manifest lists no ood_sets")

    scorers = list(doc.get("scorers") or ["wdiscood", "wd", "wdr"])
    unknown = [s for s in scorers if s not in SCORERS]
    if unknown:
        raise ManifestError(f"unknown scorers {unknown}; choose from {list(SCORERS)}")

    configs = doc.get("config") or {}
    return Manifest(
        path=path,
        train_features=train_features,
        train_labels=train_labels,
        id_test=id_test,
        ood_sets=ood_sets,
        scorers=scorers,
        wlda=dict(configs.get("wlda") or {}),
        knn_k=int(configs.get("knn", {}).get("k", 10)),
        n_pc=configs.get("pca", {}).get("n_pc"),
        temperature=float(configs.get("energy", {}).get("temperature", 1.0)),
        output_dir=(base / doc.get("output_dir", "out")).resolve(),
        seed=int(doc.get("seed", 0)),
    )


def write_json(path, doc) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_report(report, json_path, markdown_path=None) -> None:
    with atomic_write(json_path, "w") as fh:
        fh.write(report.to_json())
    if markdown_path is not None:
        with atomic_write(markdown_path, "w") as fh:
            fh.write(report.to_markdown())
