import struct

import numpy as np
import pytest

from spatial_sir.artifact import MAGIC, load_artifact, read_artifact, save_artifact
from spatial_sir.emulator import CovEmulator, DesignSpace, MeanEmulator, build_emulators
from spatial_sir.exceptions import UnsupportedFormatError


@pytest.fixture(scope="module")
def built():
    rng = np.random.default_rng(0)
    K, n_s, n_t = 10, 3, 6
    mu = np.sort(rng.uniform(10, 100, size=(K, n_s, n_t)), axis=2)[:, :, ::-1].copy()
    a = rng.normal(size=(K, n_t, n_s, n_s))
    sxx = np.einsum("ktij,ktlj->kilt", a, a)
    space = DesignSpace(("beta", "phi"), [0.0, 0.0], [1.0, 1.0], (0, 2))
    X = np.column_stack([rng.uniform(size=(K, 2)), np.tile([0, 2], K // 2)])
    mean = MeanEmulator(2, 3, n_neighbors=4, space=space)
    cov = CovEmulator(2, 4, n_neighbors=4, space=space)
    build_emulators(X, mean=mean, cov=cov, y_mean=mu, y_cov=sxx, times=np.arange(n_t) * 2.0)
    return mean, cov, X


@pytest.fixture
def saved(built, tmp_path):
    mean, cov, _ = built
    path = tmp_path / "em.mcem"
    save_artifact(path, mean, cov, extra={"note": "test"})
    return path


def test_roundtrip_is_byte_identical(built, saved, tmp_path):
    mean, cov = load_artifact(saved)
    again = tmp_path / "again.mcem"
    save_artifact(again, mean, cov, extra={"note": "test"})
    assert again.read_bytes() == saved.read_bytes()
    assert saved.read_bytes()[:4] == MAGIC
    assert not (tmp_path / "em.mcem.tmp").exists()


def test_loaded_emulators_predict_identically(built, saved):
    mean, cov, X = built
    m2, c2 = load_artifact(saved)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = np.append(rng.uniform(size=2), rng.choice([0, 2]))
        np.testing.assert_array_equal(m2.predict_one(x), mean.predict_one(x))
        np.testing.assert_array_equal(c2.predict(x[None]), cov.predict(x[None]))
    np.testing.assert_array_equal(m2.times_, mean.times_)
    assert m2.variance_explained_ == mean.variance_explained_
    assert c2.variance_explained_ == cov.variance_explained_


def test_header_contents(saved, built):
    header, arrays = read_artifact(saved)
    assert header["dims"] == {"n_s": 3, "n_t": 6, "K": 10, "J_s": 2, "J_t": 3, "L_s": 2, "L_t": 4}
    assert header["extra"] == {"note": "test"}
    assert arrays["M"].shape == (2, 2, 4, 10)
    np.testing.assert_array_equal(arrays["design"], built[2])


def test_truncation_is_rejected(saved, tmp_path):
    buf = saved.read_bytes()
    bad = tmp_path / "bad.mcem"
    for cut in (0, 3, 10, 40, len(buf) // 2, len(buf) - 1):
        bad.write_bytes(buf[:cut])
        with pytest.raises(UnsupportedFormatError):
            load_artifact(bad)
    bad.write_bytes(buf + b"\0")
    with pytest.raises(UnsupportedFormatError):
        load_artifact(bad)


def test_bad_magic_version_and_header(saved, tmp_path):
    buf = saved.read_bytes()
    bad = tmp_path / "bad.mcem"
    bad.write_bytes(b"XXXX" + buf[4:])
    with pytest.raises(UnsupportedFormatError):
        load_artifact(bad)
    bad.write_bytes(buf[:4] + struct.pack("<I", 2) + buf[8:])
    with pytest.raises(UnsupportedFormatError):
        load_artifact(bad)
    (hlen,) = struct.unpack("<Q", buf[8:16])
    bad.write_bytes(buf[:16] + b"{" * hlen + buf[16 + hlen:])
    with pytest.raises(UnsupportedFormatError):
        load_artifact(bad)
    with pytest.raises(UnsupportedFormatError):
        load_artifact(tmp_path / "missing.mcem")


def test_shape_mismatch_is_rejected(saved, tmp_path):
    buf = saved.read_bytes()
    (hlen,) = struct.unpack("<Q", buf[8:16])
    header = buf[16:16 + hlen].replace(b'"J_s": 2', b'"J_s": 3')
    bad = tmp_path / "bad.mcem"
    bad.write_bytes(buf[:8] + struct.pack("<Q", len(header)) + header + buf[16 + hlen:])
    with pytest.raises(UnsupportedFormatError):
        load_artifact(bad)
