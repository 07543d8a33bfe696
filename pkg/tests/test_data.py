import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwmmc import data as D
from dwmmc.errors import BadMagic, DimMismatch, TruncatedFile, ZeroStd


def test_spread_zero_hits_centres():
    ds = D.gen_gaussians(5, 4, 0.0, seed=1)
    ang = 2 * np.pi * ds.labels / 4
    np.testing.assert_allclose(ds.inputs, np.stack([np.cos(ang), np.sin(ang)], 1), atol=1e-15)


def test_generators_deterministic_and_splits_disjoint():
    a = D.gen_gaussians(10, 3, 0.3, seed=7)
    b = D.gen_gaussians(10, 3, 0.3, seed=7)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = D.gen_gaussians(10, 3, 0.3, seed=7, offset=1)
    assert not np.any(np.all(a.inputs[:, None] == c.inputs[None], axis=2))
    p = D.gen_patterns(5, seed=2)
    q = D.gen_patterns(5, seed=2)
    r = D.gen_patterns(5, seed=2, split=D.TEST)
    np.testing.assert_array_equal(p.inputs, q.inputs)
    assert p.inputs.shape == (50, 1, 8, 8) and r.split == D.TEST
    assert not np.any(np.all(p.inputs.reshape(50, -1)[:, None] == r.inputs.reshape(50, -1)[None],
                             axis=2))


def test_two_class_linearly_separable():
    ds = D.gen_gaussians(500, 2, 0.1, seed=0)
    # Fisher discriminant as the linear oracle
    X, y = ds.inputs, ds.labels
    m0, m1 = X[y == 0].mean(0), X[y == 1].mean(0)
    Sw = np.cov(X[y == 0].T) + np.cov(X[y == 1].T)
    w = np.linalg.solve(Sw, m1 - m0)
    thr = w @ (m0 + m1) / 2
    acc = np.mean((X @ w > thr) == (y == 1))
    assert acc > 0.99


def test_dataset_invariants():
    with pytest.raises(ValueError):
        D.Dataset(np.zeros((2, 2)), np.array([0, 3]), 3)
    with pytest.raises(ValueError):
        D.Dataset(np.array([[np.nan, 0.0]]), np.array([0]), 2)
    with pytest.raises(DimMismatch):
        D.Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)
    ds = D.gen_gaussians(3, 2, 0.1, 0)
    with pytest.raises(ValueError):
        ds.inputs[0, 0] = 1.0


def test_batches_cover_everything_once():
    ds = D.gen_gaussians(7, 3, 0.1, 0)
    seen = np.concatenate([y for _, y in ds.batches(4, np.random.default_rng(0))])
    assert sorted(seen.tolist()) == sorted(ds.labels.tolist())
    sizes = [len(y) for _, y in ds.batches(4)]
    assert sizes == [4, 4, 4, 4, 4, 1]


def test_normalize_examples():
    ds = D.gen_patterns(10, n_classes=3, channels=2, seed=0)
    same = D.normalize(ds, mean=[0, 0], std=[1, 1])
    np.testing.assert_array_equal(same.inputs, ds.inputs)
    n = D.normalize(ds)
    m, s = D.channel_stats(n)
    assert np.max(np.abs(m)) < 1e-6 and np.max(np.abs(s - 1)) < 1e-6
    const = D.Dataset(np.full((4, 1, 2, 2), 3.0), np.zeros(4, int), 1)
    z = D.normalize(const, mean=[3.0], std=[1.0])
    assert np.all(z.inputs == 0)
    with pytest.raises(ZeroStd):
        D.normalize(const)


def test_train_test_split():
    ds = D.gen_gaussians(10, 2, 0.1, 0)
    a, b = D.train_test_split(ds, 0.25, seed=0)
    assert len(a) == 15 and len(b) == 5 and b.split == D.TEST


def test_idx_grayscale_magic(tmp_path):
    img = (np.arange(3 * 28 * 28) % 256).astype(np.uint8).reshape(3, 28, 28)
    D.write_idx(tmp_path / "i", img)
    D.write_idx(tmp_path / "l", np.array([1, 0, 2], dtype=np.uint8))
    assert (tmp_path / "i").read_bytes()[:4] == bytes([0, 0, 8, 3])
    ds = D.load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.inputs.shape == (3, 1, 28, 28) and ds.n_classes == 3
    np.testing.assert_allclose(ds.inputs[:, 0], img / 255.0)
    assert len(D.load_idx(tmp_path / "i", tmp_path / "l", limit=2)) == 2


def test_idx_round_trip(tmp_path):
    ds = D.gen_patterns(4, n_classes=5, seed=3)
    D.save_idx(ds, tmp_path / "x.idx", tmp_path / "y.idx")
    back = D.load_idx(tmp_path / "x.idx", tmp_path / "y.idx", n_classes=5)
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.labels, ds.labels)


@settings(max_examples=30, deadline=None)
@given(shape=st.lists(st.integers(1, 4), min_size=1, max_size=3),
       dt=st.sampled_from(["u1", "i2", "f4", "f8"]))
def test_idx_round_trip_property(tmp_path_factory, shape, dt):
    p = tmp_path_factory.mktemp("idx") / "a"
    arr = (np.arange(int(np.prod(shape))) % 7).astype(dt).reshape(shape)
    D.write_idx(p, arr)
    np.testing.assert_array_equal(D.read_idx(p), arr)


def test_idx_errors(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"\x01\x02\x08\x01" + struct.pack(">I", 2) + b"\x00\x00")
    with pytest.raises(BadMagic):
        D.read_idx(p)
    p.write_bytes(b"\x00\x00\x08\x03" + struct.pack(">3I", 2, 2, 2) + b"\x00" * 5)
    with pytest.raises(TruncatedFile):
        D.read_idx(p)
    p.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedFile):
        D.read_idx(p)
    D.write_idx(tmp_path / "i", np.zeros((3, 2, 2), np.uint8))
    D.write_idx(tmp_path / "l", np.zeros(2, np.uint8))
    with pytest.raises(DimMismatch):
        D.load_idx(tmp_path / "i", tmp_path / "l")


def test_export_csv(tmp_path):
    ds = D.gen_gaussians(2, 2, 0.1, 0)
    D.export_csv(ds, tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "label,x0,x1" and len(rows) == 5
    assert float(rows[1].split(",")[1]) == ds.inputs[0, 0]
