"""IDX parsing, synthetic blobs, seeded batch plans."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retrospect import data
from retrospect.errors import (
    BadMagicError,
    CountMismatchError,
    ShapeError,
    TruncatedFileError,
)


def _write_pair(tmp_path, images, labels):
    img_path = tmp_path / "images.idx"
    lab_path = tmp_path / "labels.idx"
    data.write_idx_images(img_path, images)
    data.write_idx_labels(lab_path, labels)
    return img_path, lab_path


class TestIdx:
    def test_roundtrip_exact(self, tmp_path, rng):
        images = rng.integers(0, 256, (20, 4, 5), dtype=np.uint8)
        labels = rng.integers(0, 3, 20, dtype=np.uint8)
        ds = data.load_idx(*_write_pair(tmp_path, images, labels))
        assert ds.count == 20
        assert ds.inputs.shape == (20, 20)
        assert ds.class_count == int(labels.max()) + 1
        np.testing.assert_array_equal(ds.inputs, images.reshape(20, -1) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels.astype(np.int64))

    def test_pixel_scaling_endpoint(self, tmp_path):
        images = np.full((1, 1, 1), 255, dtype=np.uint8)
        ds = data.load_idx(*_write_pair(tmp_path, images, np.zeros(1, dtype=np.uint8)))
        assert ds.inputs[0, 0] == 1.0

    def test_swapped_files_bad_magic(self, tmp_path, rng):
        images = rng.integers(0, 256, (3, 2, 2), dtype=np.uint8)
        labels = np.zeros(3, dtype=np.uint8)
        img_path, lab_path = _write_pair(tmp_path, images, labels)
        with pytest.raises(BadMagicError):
            data.load_idx(lab_path, img_path)

    def test_truncated_payload(self, tmp_path, rng):
        images = rng.integers(0, 256, (3, 2, 2), dtype=np.uint8)
        img_path, lab_path = _write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8))
        img_path.write_bytes(img_path.read_bytes()[:-4])
        with pytest.raises(TruncatedFileError):
            data.load_idx(img_path, lab_path)

    def test_trailing_garbage(self, tmp_path, rng):
        images = rng.integers(0, 256, (3, 2, 2), dtype=np.uint8)
        img_path, lab_path = _write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8))
        img_path.write_bytes(img_path.read_bytes() + b"junk")
        with pytest.raises(TruncatedFileError):
            data.load_idx(img_path, lab_path)

    def test_count_mismatch(self, tmp_path, rng):
        images = rng.integers(0, 256, (3, 2, 2), dtype=np.uint8)
        img_path, _ = _write_pair(tmp_path, images, np.zeros(3, dtype=np.uint8))
        lab_path = tmp_path / "short.idx"
        data.write_idx_labels(lab_path, np.zeros(2, dtype=np.uint8))
        with pytest.raises(CountMismatchError):
            data.load_idx(img_path, lab_path)


class TestBlobs:
    def test_determinism(self):
        a = data.gen_blobs(3, 2, 50, 1.0, seed=7)
        b = data.gen_blobs(3, 2, 50, 1.0, seed=7)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_counts_and_balance(self):
        ds = data.gen_blobs(3, 2, 100, 1.0, seed=0)
        assert ds.count == 300
        assert ds.class_count == 3
        assert np.bincount(ds.labels).tolist() == [100, 100, 100]

    def test_center_separation(self):
        # class means estimate the centers; they must sit ~4 spreads apart
        spread = 0.5
        ds = data.gen_blobs(4, 3, 2000, spread, seed=3)
        means = np.stack([ds.inputs[ds.labels == c].mean(axis=0) for c in range(4)])
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(means[i] - means[j]) >= 3.9 * spread

    def test_simplex_centers_exact_distance(self):
        rng = np.random.default_rng(5)
        centers = data._simplex_centers(4, 5, rng, edge=2.0)
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(centers[i] - centers[j]) == pytest.approx(2.0, rel=1e-9)

    def test_many_classes_rejection_path(self):
        # k > dims+1 exercises rejection sampling
        ds = data.gen_blobs(6, 2, 10, 0.3, seed=11)
        centers = np.stack([ds.inputs[ds.labels == c].mean(axis=0) for c in range(6)])
        for i in range(6):
            for j in range(i + 1, 6):
                assert np.linalg.norm(centers[i] - centers[j]) >= 3.0 * 0.3

    def test_degenerate_spread_fully_separable(self):
        ds = data.gen_blobs(3, 2, 30, 1e-9, seed=2)
        centers = np.stack([ds.inputs[ds.labels == c].mean(axis=0) for c in range(3)])
        nearest = np.argmin(
            ((ds.inputs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        assert np.array_equal(nearest, ds.labels)

    def test_validation(self):
        with pytest.raises(ShapeError):
            data.gen_blobs(1, 2, 10, 1.0, 0)
        with pytest.raises(ShapeError):
            data.gen_blobs(3, 2, 0, 1.0, 0)
        with pytest.raises(ShapeError):
            data.gen_blobs(3, 2, 10, 0.0, 0)


class TestBatchPlan:
    def test_batch_sizes(self):
        ds = data.gen_blobs(2, 2, 5, 1.0, seed=1)  # 10 samples
        plan = data.BatchPlan(seed=0, batch_size=3, count=10, epochs=1)
        sizes = [len(labels) for _, labels in data.batches(ds, plan, 0)]
        assert sizes == [3, 3, 3, 1]

    def test_identical_streams(self):
        ds = data.gen_blobs(2, 2, 10, 1.0, seed=1)
        plan = data.BatchPlan(seed=4, batch_size=4, count=20, epochs=2)
        first = [(x.values.copy(), labels.copy()) for x, labels in data.batches(ds, plan, 1)]
        second = [(x.values.copy(), labels.copy()) for x, labels in data.batches(ds, plan, 1)]
        for (xa, la), (xb, lb) in zip(first, second):
            assert np.array_equal(xa, xb) and np.array_equal(la, lb)

    def test_same_seed_same_plan(self):
        a = data.BatchPlan(seed=9, batch_size=4, count=17, epochs=3)
        b = data.BatchPlan(seed=9, batch_size=4, count=17, epochs=3)
        for e in range(3):
            assert np.array_equal(a.permutation(e), b.permutation(e))

    def test_epoch_out_of_range(self):
        plan = data.BatchPlan(seed=0, batch_size=2, count=4, epochs=1)
        with pytest.raises(IndexError):
            plan.permutation(1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 10), st.integers(1, 4), st.integers(0, 999))
    def test_partition_property(self, count, batch_size, epochs, seed):
        plan = data.BatchPlan(seed=seed, batch_size=batch_size, count=count, epochs=epochs)
        for epoch in range(epochs):
            perm = plan.permutation(epoch)
            assert sorted(perm.tolist()) == list(range(count))
