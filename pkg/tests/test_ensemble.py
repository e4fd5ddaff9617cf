import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgunion import (
    FeatureGrid,
    aggregate_votes,
    apply_corner_prior,
    invert_heatmap,
    meanshift_clusters,
    meanshift_threshold,
    union_cut,
)


def meanshift_oracle(values, bandwidth, tol=1e-3, max_iter=100):
    """Naive mode seeking: iterate each point's mean shift over the raw
    multiset, then merge modes within bandwidth/2 in descending order.
    Returns per-point cluster labels (0.. in descending center order) and
    the cluster centers (founding modes)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    modes = np.empty(values.size)
    for i, v in enumerate(values):
        m = float(v)
        for _ in range(max_iter):
            window = values[np.abs(values - m) <= bandwidth]
            shifted = float(window.mean())
            moved = abs(shifted - m)
            m = shifted
            if moved < tol:
                break
        modes[i] = m
    order = np.argsort(-modes, kind="stable")
    labels = np.empty(values.size, dtype=np.int64)
    centers = []
    for i in order:
        if centers and centers[-1] - modes[i] <= bandwidth / 2.0:
            labels[i] = len(centers) - 1
        else:
            centers.append(modes[i])
            labels[i] = len(centers) - 1
    return labels, np.asarray(centers)


def test_aggregate_votes_counting():
    zero = np.zeros((1, 2), np.uint8)
    out = aggregate_votes([zero, zero])
    np.testing.assert_array_equal(out, np.zeros((1, 2), np.float32))
    assert out.dtype == np.float32

    a = np.array([[1, 0]], np.uint8)
    b = np.array([[1, 1]], np.uint8)
    np.testing.assert_array_equal(aggregate_votes([a, b]), [[2.0, 1.0]])


def test_aggregate_votes_matches_naive_sum():
    rng = np.random.default_rng(5)
    masks = [(rng.random((4, 4)) < 0.5).astype(np.uint8) for _ in range(16)]
    expected = np.zeros((4, 4), dtype=np.float64)
    for m in masks:
        expected += m
    np.testing.assert_array_equal(aggregate_votes(masks), expected.astype(np.float32))


def test_aggregate_votes_rejections():
    with pytest.raises(ValueError):
        aggregate_votes([])
    with pytest.raises(ValueError):
        aggregate_votes([np.zeros((1, 2), np.uint8), np.zeros((2, 1), np.uint8)])
    with pytest.raises(ValueError):  # wrong count: 2x2 grid needs 4 masks
        aggregate_votes([np.zeros((2, 2), np.uint8)] * 3)


def test_invert_heatmap_values():
    a = np.array([[0.0, 392.0, 784.0]], np.float32)
    np.testing.assert_allclose(invert_heatmap(a), [[255.0, 127.5, 0.0]], rtol=1e-6)

    const = np.full((2, 3), 7.0, np.float32)
    np.testing.assert_array_equal(invert_heatmap(const), np.zeros((2, 3), np.float32))

    out = invert_heatmap(np.array([[1.0, 5.0]], np.float32))
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, [[255.0, 0.0]])


def test_meanshift_two_groups():
    h = np.array([[0.0, 0.0, 255.0], [0.0, 255.0, 0.0]], np.float32)
    mask = meanshift_threshold(h, bandwidth=25.5)
    np.testing.assert_array_equal(mask, (h == 255.0).astype(np.uint8))


def test_meanshift_three_clusters():
    # centers ~ {10, 120, 250}: ceil(3/2) = 2 top clusters selected
    vals = np.array([10.0, 12.0, 8.0, 120.0, 118.0, 122.0, 250.0, 248.0, 252.0], np.float32)
    mask = meanshift_threshold(vals.reshape(3, 3), bandwidth=25.5)
    np.testing.assert_array_equal(mask.ravel(), (vals > 100).astype(np.uint8))

    labels, centers = meanshift_clusters(vals, bandwidth=25.5)
    assert centers.size == 3
    assert centers[0] > centers[1] > centers[2]
    np.testing.assert_array_equal(labels, [2, 2, 2, 1, 1, 1, 0, 0, 0])


def test_meanshift_constant_is_empty():
    np.testing.assert_array_equal(
        meanshift_threshold(np.full((3, 3), 9.0, np.float32)),
        np.zeros((3, 3), np.uint8))


def test_meanshift_matches_oracle():
    rng = np.random.default_rng(17)
    for _ in range(25):
        n = int(rng.integers(2, 120))
        vals = rng.random(n) * 255.0
        labels, centers = meanshift_clusters(vals, bandwidth=25.5)
        olabels, ocenters = meanshift_oracle(vals, bandwidth=25.5)
        np.testing.assert_array_equal(labels, olabels)
        np.testing.assert_allclose(centers, ocenters, rtol=1e-9, atol=1e-9)


def test_meanshift_duplicate_values_share_labels():
    vals = np.array([5.0, 5.0, 200.0, 5.0, 200.0])
    labels, centers = meanshift_clusters(vals, bandwidth=25.5)
    assert labels[0] == labels[1] == labels[3]
    assert labels[2] == labels[4]
    assert centers.size == 2


def test_corner_prior():
    ones = np.ones((3, 3), np.uint8)
    out, flipped = apply_corner_prior(ones)
    assert flipped
    np.testing.assert_array_equal(out, np.zeros((3, 3), np.uint8))

    open_corner = np.ones((3, 3), np.uint8)
    open_corner[0, 0] = 0
    out2, flipped2 = apply_corner_prior(open_corner)
    assert not flipped2
    np.testing.assert_array_equal(out2, open_corner)

    corners_only = np.zeros((3, 3), np.uint8)
    for r, c in ((0, 0), (0, -1), (-1, 0), (-1, -1)):
        corners_only[r, c] = 1
    out3, flipped3 = apply_corner_prior(corners_only)
    assert flipped3
    np.testing.assert_array_equal(out3, 1 - corners_only)


def test_corner_prior_idempotent():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = (rng.random((4, 5)) < 0.5).astype(np.uint8)
        once, _ = apply_corner_prior(m)
        twice, again = apply_corner_prior(once)
        assert not again
        np.testing.assert_array_equal(twice, once)


def block_grid(h, w, r0, r1, c0, c1):
    u = np.array([1.0, 0.0], np.float32)
    f = np.tile(-u, (h, w, 1))
    f[r0:r1, c0:c1] = u
    mask = np.zeros((h, w), np.uint8)
    mask[r0:r1, c0:c1] = 1
    return FeatureGrid.from_array(f), mask


def test_union_cut_block():
    # 6x6 block of u in a field of -u: every voter is block-or-complement,
    # so the aggregate is two-valued and the union is exactly the block
    grid, planted = block_grid(28, 28, 10, 16, 10, 16)
    out = union_cut(grid, workers=2)
    np.testing.assert_array_equal(out.union_mask, planted)
    assert not out.corner_inverted
    # the aggregate really is two-valued: 36 votes inside, 748 outside
    assert set(np.unique(out.aggregate)) == {36.0, 748.0}


def test_union_cut_uniform_grid():
    f = np.tile(np.array([1.0, 0.0], np.float32), (4, 4, 1))
    out = union_cut(FeatureGrid.from_array(f), workers=1)
    np.testing.assert_array_equal(out.aggregate, np.full((4, 4), 16.0, np.float32))
    np.testing.assert_array_equal(out.inverted, np.zeros((4, 4), np.float32))
    np.testing.assert_array_equal(out.union_mask, np.zeros((4, 4), np.uint8))
    assert not out.corner_inverted


def test_union_cut_hole_is_found_without_flip():
    # a small interior hole is the minority region: inversion brightens it
    # and the threshold picks it directly, no corner flip involved
    u = np.array([1.0, 0.0], np.float32)
    f = np.tile(u, (6, 6, 1))
    f[2:4, 2:4] = -u
    out = union_cut(FeatureGrid.from_array(f), workers=1)
    assert not out.corner_inverted
    hole = np.zeros((6, 6), np.uint8)
    hole[2:4, 2:4] = 1
    np.testing.assert_array_equal(out.union_mask, hole)


def test_union_cut_corner_flip():
    # the minority region sits exactly on the four corners: the threshold
    # selects the corners, then the corner prior complements the mask
    u = np.array([1.0, 0.0], np.float32)
    f = np.tile(-u, (6, 6, 1))
    corners = np.zeros((6, 6), bool)
    for r, c in ((0, 0), (0, -1), (-1, 0), (-1, -1)):
        corners[r, c] = True
    f[corners] = u
    out = union_cut(FeatureGrid.from_array(f), workers=1)
    assert out.corner_inverted
    np.testing.assert_array_equal(out.union_mask, (~corners).astype(np.uint8))


def test_union_cut_every_patch_votes_for_itself():
    rng = np.random.default_rng(9)
    f = rng.normal(size=(5, 5, 4))
    f /= np.linalg.norm(f, axis=-1, keepdims=True)
    out = union_cut(FeatureGrid.from_array(f.astype(np.float32)), workers=1)
    assert out.aggregate.min() >= 1.0


def test_union_cut_worker_independence():
    rng = np.random.default_rng(10)
    f = rng.normal(size=(6, 6, 4))
    f /= np.linalg.norm(f, axis=-1, keepdims=True)
    grid = FeatureGrid.from_array(f.astype(np.float32))
    serial = union_cut(grid, workers=1)
    threaded = union_cut(grid, workers=8)
    np.testing.assert_array_equal(serial.aggregate, threaded.aggregate)
    np.testing.assert_array_equal(serial.inverted, threaded.inverted)
    np.testing.assert_array_equal(serial.union_mask, threaded.union_mask)
    assert serial.corner_inverted == threaded.corner_inverted


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 60))
def test_meanshift_oracle_property(seed, n):
    rng = np.random.default_rng(seed)
    vals = rng.random(n) * 255.0
    labels, _ = meanshift_clusters(vals, bandwidth=25.5)
    olabels, _ = meanshift_oracle(vals, bandwidth=25.5)
    np.testing.assert_array_equal(labels, olabels)
