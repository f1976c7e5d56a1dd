import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from e2cp import (Dataset, KernelMatrix, KernelSpec, LoadError, compute_kernel, load_dataset, load_kernel,
                  normalize_features, ring_centers, save_dataset, synth_blobs, synth_two_moons)
from e2cp.dataset import median_distance

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
point_sets = arrays(float, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=finite)


# --- loading -----------------------------------------------------------------

def test_load_with_header_and_labels(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y,label\n0.5,1.5,0\n2,3,1\n-1,0,1\n")
    ds = load_dataset(p, has_labels=True)
    assert ds.points.tolist() == [[0.5, 1.5], [2.0, 3.0], [-1.0, 0.0]]
    assert ds.labels.tolist() == [0, 1, 1]
    assert ds.n_classes == 2


def test_load_without_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,4\n")
    assert load_dataset(p).points.shape == (2, 2)


@pytest.mark.parametrize("text, match", [
    ("1,2\n3\n", "row 2"),
    ("1,2\n3,nan\n", "non-finite"),
    ("1,2\n3,abc\n", "row 2"),
    ("", "no data"),
])
def test_load_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(LoadError, match=match):
        load_dataset(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(LoadError, match="no such file"):
        load_dataset(tmp_path / "nope.csv")


def test_label_column_must_be_integer(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2,0.5\n3,4,1\n")
    with pytest.raises(LoadError, match="label"):
        load_dataset(p, has_labels=True)


def test_save_load_roundtrip_is_exact(tmp_path):
    ds = synth_two_moons(20, 0.1, seed=3)
    p = tmp_path / "m.csv"
    save_dataset(ds, p)
    back = load_dataset(p, has_labels=True)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_kernel_file_validation(tmp_path):
    p = tmp_path / "k.csv"
    p.write_text("1,0.2\n0.3,1\n")
    with pytest.raises(LoadError, match="symmetric"):
        load_kernel(p)
    p.write_text("0,0.2\n0.2,1\n")
    with pytest.raises(LoadError, match="diagonal"):
        load_kernel(p)
    p.write_text("1,0.2\n0.2,1\n")
    assert load_kernel(p).n == 2


def test_dataset_is_read_only():
    ds = Dataset(np.zeros((3, 2)), labels=[0, 1, 1])
    with pytest.raises(ValueError):
        ds.points[0, 0] = 1.0


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), labels=[0, 1])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), labels=[0, -1])


# --- feature scaling -----------------------------------------------------------

def test_normalize_constant_column_goes_to_midpoint():
    out = normalize_features(Dataset(np.array([[7.0], [7.0], [7.0]])))
    assert out.points.ravel().tolist() == [0.0, 0.0, 0.0]


def test_normalize_two_point_column():
    out = normalize_features(Dataset(np.array([[2.0], [4.0]])))
    assert out.points.ravel().tolist() == [-1.0, 1.0]


@given(point_sets)
def test_normalize_is_idempotent_and_in_range(x):
    once = normalize_features(Dataset(x))
    twice = normalize_features(once)
    assert np.all(once.points >= -1) and np.all(once.points <= 1)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-12)


# --- kernels -------------------------------------------------------------------

def test_gaussian_direct_substitution():
    k = compute_kernel(Dataset(np.array([[0.0, 0.0], [0.0, 2.0]])), KernelSpec(sigma=1.0))
    assert k.values[0, 1] == pytest.approx(math.exp(-2.0), rel=1e-15)
    assert k.values[0, 0] == 1.0


def test_gaussian_identical_points_give_one():
    k = compute_kernel(Dataset(np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])), KernelSpec(sigma=0.5))
    assert k.values[0, 1] == 1.0


def test_gaussian_default_sigma_is_median_distance():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])  # distances 3, 4, 5
    assert median_distance(pts) == 4.0
    k = compute_kernel(Dataset(pts))
    assert k.values[0, 1] == pytest.approx(math.exp(-9 / 32))


def test_normalized_correlation_orthogonal_is_half():
    k = compute_kernel(Dataset(np.array([[1.0, 0.0], [0.0, 3.0]])), KernelSpec("normalized_correlation"))
    assert k.values[0, 1] == 0.5
    assert k.values[0, 0] == 1.0


def test_normalized_correlation_zero_row_raises():
    with pytest.raises(ValueError, match="zero-norm"):
        compute_kernel(Dataset(np.array([[0.0, 0.0], [1.0, 1.0]])), KernelSpec("normalized_correlation"))


def test_precomputed_passthrough_and_validation():
    a = np.array([[1.0, 0.3], [0.3, 2.0]])
    assert np.array_equal(compute_kernel(Dataset(a), KernelSpec("precomputed")).values, a)
    with pytest.raises(ValueError):
        KernelMatrix(np.array([[1.0, 0.3], [0.2, 1.0]]))
    with pytest.raises(ValueError):
        KernelMatrix(np.array([[-1.0, 0.0], [0.0, 1.0]]))


@pytest.mark.parametrize("kind", ["gaussian", "normalized_correlation"])
@given(x=point_sets)
def test_kernel_properties(kind, x):
    x = x + 1e-3 * np.arange(x.shape[0])[:, None] + 1.0  # keep rows nonzero
    a = compute_kernel(Dataset(x), KernelSpec(kind)).values
    assert np.max(np.abs(a - a.T)) < 1e-12
    assert np.all(a >= 0) and np.all(a <= 1)
    assert np.all(np.diag(a) == 1.0)
    assert np.all(np.diag(a)[:, None] >= a - 1e-15)


# --- synthetic data ----------------------------------------------------------

def test_moons_noiseless_on_half_circles():
    ds = synth_two_moons(100, 0.0)
    up, lo = ds.points[:50], ds.points[50:]
    np.testing.assert_allclose(np.hypot(up[:, 0], up[:, 1]), 1.0, atol=1e-14)
    np.testing.assert_allclose(np.hypot(lo[:, 0] - 1.0, lo[:, 1] - 0.5), 1.0, atol=1e-14)
    assert np.all(up[:, 1] >= -1e-15) and np.all(lo[:, 1] <= 0.5 + 1e-15)
    assert ds.labels.tolist() == [0] * 50 + [1] * 50


def test_moons_counts_and_determinism():
    assert synth_two_moons(4).labels.tolist() == [0, 0, 1, 1]
    a, b = synth_two_moons(30, 0.1, seed=7), synth_two_moons(30, 0.1, seed=7)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, synth_two_moons(30, 0.1, seed=8).points)


@pytest.mark.parametrize("n", [3, 5, 2])
def test_moons_rejects_bad_n(n):
    with pytest.raises(ValueError):
        synth_two_moons(n)


def test_blobs_shape_degenerate_and_determinism():
    c = ring_centers(3, 2.0)
    ds = synth_blobs(10, 3, c, 0.5, seed=1)
    assert ds.n == 30 and ds.labels.tolist() == [0] * 10 + [1] * 10 + [2] * 10
    flat = synth_blobs(10, 3, c, 0.0, seed=1)
    np.testing.assert_array_equal(flat.points, np.repeat(c, 10, axis=0))
    np.testing.assert_array_equal(ds.points, synth_blobs(10, 3, c, 0.5, seed=1).points)
    with pytest.raises(ValueError):
        synth_blobs(10, 1, c[:1], 0.5)


def test_ring_centers_on_circle():
    c = ring_centers(4, 3.0, dim=3)
    np.testing.assert_allclose(np.hypot(c[:, 0], c[:, 1]), 3.0)
    assert np.all(c[:, 2] == 0)
