"""Model init, forward, snapshots, frozen forward, snapshot file format."""

import struct

import numpy as np
import pytest

from retrospect import nn
from retrospect import tensor as T
from retrospect.errors import (
    BadMagicError,
    DataFormatError,
    ShapeError,
    TruncatedFileError,
)


class TestInit:
    def test_same_seed_bit_identical(self):
        a = nn.mlp_init([4, 3, 2], seed=5)
        b = nn.mlp_init([4, 3, 2], seed=5)
        for pa, pb in zip(a.params, b.params):
            assert pa.name == pb.name
            assert np.array_equal(pa.tensor.values, pb.tensor.values)

    def test_param_shapes(self):
        m = nn.mlp_init([4, 3, 2], seed=0)
        assert [(p.name, p.tensor.shape) for p in m.params] == [
            ("w1", (4, 3)), ("b1", (3,)), ("w2", (3, 2)), ("b2", (2,)),
        ]

    def test_seed_sensitivity(self):
        a = nn.mlp_init([4, 3, 2], seed=1)
        b = nn.mlp_init([4, 3, 2], seed=2)
        assert not np.array_equal(a.param("w1").values, b.param("w1").values)

    def test_glorot_bounds_and_zero_biases(self):
        m = nn.mlp_init([10, 7, 4], seed=3)
        a1 = np.sqrt(6.0 / (10 + 7))
        assert np.abs(m.param("w1").values).max() <= a1
        assert np.array_equal(m.param("b1").values, np.zeros(7))

    def test_degenerate_layer_list(self):
        with pytest.raises(ShapeError):
            nn.mlp_init([4], seed=0)
        with pytest.raises(ShapeError):
            nn.mlp_init([4, 0, 2], seed=0)


class TestForward:
    def test_rows_sum_to_one(self, rng):
        m = nn.mlp_init([5, 8, 3], seed=1)
        probs = m.forward(None, rng.uniform(-1, 1, (16, 5)))
        assert np.abs(probs.values.sum(axis=1) - 1.0).max() < 1e-12

    def test_zero_weight_model_uniform(self):
        zeros = {"w1": np.zeros((4, 3)), "b1": np.zeros(3)}
        m = nn.MlpModel([4, 3], zeros)
        probs = m.forward(None, np.ones((2, 4)))
        np.testing.assert_array_equal(probs.values, np.full((2, 3), 1 / 3))

    def test_width_mismatch(self):
        m = nn.mlp_init([4, 3, 2], seed=0)
        with pytest.raises(ShapeError):
            m.forward(None, np.zeros((1, 5)))

    def test_batching_consistency(self, rng):
        # batch of 2 equals two batches of 1, concatenated
        m = nn.mlp_init([6, 5, 4], seed=9)
        x = rng.uniform(-1, 1, (2, 6))
        together = m.forward(None, x).values
        separate = np.vstack([m.forward(None, x[i:i + 1]).values for i in range(2)])
        np.testing.assert_allclose(together, separate, atol=1e-12)

    def test_forward_records_for_backward(self, rng):
        m = nn.mlp_init([3, 4, 2], seed=2)
        tape = T.Tape()
        probs = m.forward(tape, rng.uniform(-1, 1, (4, 3)))
        gm = T.backward(T.cross_entropy(tape, probs, [0, 1, 0, 1]))
        for p in m.params:
            assert gm.wrt(p.tensor).shape == p.tensor.shape


class TestSnapshot:
    def test_snapshot_is_deep_copy(self):
        m = nn.mlp_init([3, 2], seed=4)
        snap = nn.snapshot(m, step=7, origin=nn.SnapshotOrigin.TRAINED)
        before = snap.entries["w1"].copy()
        m.param("w1").values[:] += 1.0  # simulate a training update
        assert np.array_equal(snap.entries["w1"], before)

    def test_snapshot_entries_are_readonly(self):
        m = nn.mlp_init([3, 2], seed=4)
        snap = nn.snapshot(m, 0, nn.SnapshotOrigin.TRAINED)
        with pytest.raises(ValueError):
            snap.entries["w1"][0, 0] = 99.0

    def test_snapshot_keys_match_registry(self):
        m = nn.mlp_init([4, 3, 2], seed=1)
        snap = nn.snapshot(m, 0, nn.SnapshotOrigin.TRAINED)
        assert sorted(snap.entries) == sorted(p.name for p in m.params)

    def test_roundtrip_forward_equivalence(self, rng):
        m = nn.mlp_init([5, 6, 3], seed=11)
        x = rng.uniform(-1, 1, (7, 5))
        snap = nn.snapshot(m, 0, nn.SnapshotOrigin.TRAINED)
        live = m.forward(None, x).values
        frozen = nn.forward_frozen(snap, [5, 6, 3], x).values
        np.testing.assert_allclose(frozen, live, atol=1e-12)

    def test_frozen_output_is_detached(self, rng):
        m = nn.mlp_init([3, 2], seed=0)
        snap = nn.snapshot(m, 0, nn.SnapshotOrigin.TRAINED)
        out = nn.forward_frozen(snap, [3, 2], rng.uniform(-1, 1, (2, 3)))
        assert out.tape is None
        assert not out.requires_grad

    def test_frozen_shape_validation(self):
        m = nn.mlp_init([3, 2], seed=0)
        snap = nn.snapshot(m, 0, nn.SnapshotOrigin.TRAINED)
        with pytest.raises(ShapeError):
            nn.forward_frozen(snap, [3, 4], np.zeros((1, 3)))
        with pytest.raises(ShapeError):
            nn.forward_frozen(snap, [3, 2], np.zeros((1, 4)))

    def test_random_snapshot_valid_probabilities(self, rng):
        snap = nn.random_snapshot([4, 3], np.random.default_rng(8))
        assert snap.origin is nn.SnapshotOrigin.RANDOM_INIT
        probs = nn.forward_frozen(snap, [4, 3], rng.uniform(0, 1, (5, 4))).values
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-12
        assert probs.min() >= 0.0


class TestSnapshotFile:
    def _snap(self):
        m = nn.mlp_init([4, 3, 2], seed=6)
        return nn.snapshot(m, step=123, origin=nn.SnapshotOrigin.TRAINED)

    def test_roundtrip_exact(self, tmp_path):
        snap = self._snap()
        path = tmp_path / "state.rsnp"
        nn.save_snapshot(snap, path)
        loaded = nn.load_snapshot(path)
        assert loaded.step == 123
        assert loaded.origin is nn.SnapshotOrigin.TRAINED
        assert sorted(loaded.entries) == sorted(snap.entries)
        for name in snap.entries:
            assert np.array_equal(loaded.entries[name], snap.entries[name])

    def test_header_layout(self, tmp_path):
        path = tmp_path / "state.rsnp"
        nn.save_snapshot(self._snap(), path)
        raw = path.read_bytes()
        assert raw[:4] == b"RSNP"
        version, step, origin, count = struct.unpack("<IQBI", raw[4:21])
        assert (version, step, origin, count) == (1, 123, 1, 4)
        # first entry record: u16 name length then the name
        (name_len,) = struct.unpack("<H", raw[21:23])
        assert raw[23:23 + name_len].decode() == "w1"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "state.rsnp"
        nn.save_snapshot(self._snap(), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            nn.load_snapshot(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "state.rsnp"
        nn.save_snapshot(self._snap(), path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncatedFileError):
            nn.load_snapshot(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "state.rsnp"
        nn.save_snapshot(self._snap(), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DataFormatError):
            nn.load_snapshot(path)
