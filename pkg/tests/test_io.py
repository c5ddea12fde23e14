import json
import struct

import numpy as np
import pytest

from wdiscood import io
from wdiscood.errors import (
    BadMagic,
    DimMismatch,
    ManifestError,
    NonFinite,
    TruncatedPayload,
    VersionUnsupported,
)
from wdiscood.wlda import WldaConfig, fit


def test_features_round_trip_bit_exact(tmp_path):
    m = np.random.default_rng(0).standard_normal((7, 5))
    io.write_features(tmp_path / "m.fmat", m)
    back = io.read_features(tmp_path / "m.fmat")
    assert back.dtype == np.float64 and back.tobytes() == m.tobytes()


def test_f32_hand_encoded(tmp_path):
    path = tmp_path / "f32.fmat"
    header = b"FMAT" + struct.pack("<IQQI", 1, 1, 2, 0)
    path.write_bytes(header + bytes.fromhex("0000803f") + bytes.fromhex("00000040"))
    np.testing.assert_array_equal(io.read_features(path), [[1.0, 2.0]])


def test_f32_write_widens_on_read(tmp_path):
    m = np.array([[0.1, 0.2]], dtype=np.float32)
    io.write_features(tmp_path / "a.fmat", m, dtype="f32")
    back = io.read_features(tmp_path / "a.fmat")
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, m.astype(np.float64))


def test_bad_magic(tmp_path):
    path = tmp_path / "x.fmat"
    path.write_bytes(b"XMAT" + struct.pack("<IQQI", 1, 1, 1, 1) + b"\0" * 8)
    with pytest.raises(BadMagic):
        io.read_features(path)


def test_bad_version_and_dtype(tmp_path):
    path = tmp_path / "x.fmat"
    path.write_bytes(b"FMAT" + struct.pack("<IQQI", 2, 1, 1, 1) + b"\0" * 8)
    with pytest.raises(VersionUnsupported):
        io.read_features(path)
    path.write_bytes(b"FMAT" + struct.pack("<IQQI", 1, 1, 1, 7) + b"\0" * 8)
    with pytest.raises(VersionUnsupported):
        io.read_features(path)


def test_truncated(tmp_path):
    path = tmp_path / "x.fmat"
    path.write_bytes(b"FMAT" + struct.pack("<IQQI", 1, 2, 2, 1) + b"\0" * 24)
    with pytest.raises(TruncatedPayload):
        io.read_features(path)
    path.write_bytes(b"FMA")
    with pytest.raises(TruncatedPayload):
        io.read_features(path)


def test_non_finite_rejected(tmp_path):
    io.write_features(tmp_path / "n.fmat", np.array([[1.0, np.nan]]))
    with pytest.raises(NonFinite):
        io.read_features(tmp_path / "n.fmat")


def test_labels_round_trip(tmp_path):
    y = np.array([0, 3, 1, 2, 2])
    io.write_labels(tmp_path / "y.lvec", y)
    np.testing.assert_array_equal(io.read_labels(tmp_path / "y.lvec"), y)
    raw = (tmp_path / "y.lvec").read_bytes()
    assert raw[:4] == b"LVEC" and len(raw) == 16 + 4 * 5


def test_labels_negative_rejected(tmp_path):
    path = tmp_path / "y.lvec"
    path.write_bytes(b"LVEC" + struct.pack("<IQ", 1, 1) + struct.pack("<i", -1))
    with pytest.raises(DimMismatch):
        io.read_labels(path)


def test_csv_import(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("# comment\n1.5,2,0\n3,4.25,1\n")
    x, y = io.read_features_csv(path, labels_last=True)
    np.testing.assert_array_equal(x, [[1.5, 2.0], [3.0, 4.25]])
    np.testing.assert_array_equal(y, [0, 1])
    np.testing.assert_array_equal(io.read_features(path), [[1.5, 2, 0], [3, 4.25, 1]])
    path.write_text("1,nan\n")
    with pytest.raises(NonFinite):
        io.read_features(path)


def test_model_round_trip_bit_exact(tmp_path):
    from conftest import gaussian_classes

    model = fit(gaussian_classes(1, c=5, d=12, n_per_class=40),
                WldaConfig(n_disc=6, alpha=2.5, seed=3, n_fit=150))
    io.write_model(tmp_path / "m.bin", model)
    back = io.read_model(tmp_path / "m.bin")
    assert back.config == model.config
    for name in ("whitener", "discriminants", "fisher_values", "q_basis",
                 "wd_class_centers", "wdr_center"):
        a, b = getattr(model, name), getattr(back, name)
        assert a.shape == b.shape and a.tobytes() == b.tobytes(), name
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"WLDA"


def test_model_bad_magic(tmp_path):
    (tmp_path / "m.bin").write_bytes(b"FMAT" + b"\0" * 100)
    with pytest.raises(BadMagic):
        io.read_model(tmp_path / "m.bin")


def test_scores_files(tmp_path):
    v = np.array([-1.25, 0.0, -3.5])
    io.write_scores(tmp_path / "s.fmat", v)
    assert io.read_scores(tmp_path / "s.fmat").tobytes() == v.tobytes()
    io.write_scores_csv(tmp_path / "s.csv", "wd", v)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sample_index,scorer,score" and lines[2] == "1,wd,0.0"


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with io.atomic_write(target, "w") as fh:
            fh.write("partial")
            raise RuntimeError
    assert not target.exists() and list(tmp_path.iterdir()) == []


def _manifest(tmp_path, **over):
    x = np.random.default_rng(0).standard_normal((20, 3))
    io.write_features(tmp_path / "x.fmat", x)
    io.write_labels(tmp_path / "y.lvec", np.arange(20) % 2)
    doc = {
        "schema": 1,
        "id_train": {"features": "x.fmat", "labels": "y.lvec"},
        "id_test": {"features": "x.fmat"},
        "ood_sets": [{"name": "o", "features": "x.fmat"}],
    }
    doc.update(over)
    (tmp_path / "m.json").write_text(json.dumps(doc))
    return tmp_path / "m.json"


def test_manifest_load(tmp_path):
    m = io.read_manifest(_manifest(tmp_path, config={"knn": {"k": 3}}))
    assert m.ood_sets[0].name == "o" and m.knn_k == 3
    assert m.output_dir == (tmp_path / "out").resolve()


@pytest.mark.parametrize("over, fragment", [
    ({"schema": 7}, "schema"),
    ({"ood_sets": [{"name": "o", "features": "missing.fmat"}]}, "ood_sets[0].features"),
    ({"ood_sets": []}, "no ood_sets"),
    ({"scorers": ["vim"]}, "unknown scorers"),
    ({"id_train": {"features": "x.fmat"}}, "id_train.labels"),
])
def test_manifest_errors(tmp_path, over, fragment):
    with pytest.raises(ManifestError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        io.read_manifest(_manifest(tmp_path, **over))
