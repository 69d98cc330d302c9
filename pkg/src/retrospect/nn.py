"""MLP model, parameter registry, and frozen parameter snapshots.

The model is a plain ReLU MLP with a softmax output row-normalized per
sample. Snapshots are deep, immutable copies of the parameter values used
as guidance states; ``forward_frozen`` replays the forward pass from a
snapshot with no gradient recording, so its outputs are constants with
respect to the live model.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as T
from .errors import BadMagicError, DataFormatError, ShapeError, TruncatedFileError

SNAPSHOT_MAGIC = b"RSNP"
SNAPSHOT_VERSION = 1


class SnapshotOrigin(enum.Enum):
    RANDOM_INIT = 0
    TRAINED = 1


class Param(NamedTuple):
    name: str
    tensor: T.Tensor


@dataclass(frozen=True)
class ParamSnapshot:
    """Frozen copy of all model parameters at a training step."""

    step: int
    origin: SnapshotOrigin
    entries: dict[str, np.ndarray]

    def __post_init__(self):
        for arr in self.entries.values():
            arr.setflags(write=False)


def _layer_param_shapes(layer_sizes: Sequence[int]) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    for i in range(len(layer_sizes) - 1):
        shapes.append((f"w{i + 1}", (layer_sizes[i], layer_sizes[i + 1])))
        shapes.append((f"b{i + 1}", (layer_sizes[i + 1],)))
    return shapes


def glorot_uniform_values(layer_sizes: Sequence[int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    values = {}
    for i in range(len(layer_sizes) - 1):
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        values[f"w{i + 1}"] = rng.uniform(-a, a, size=(fan_in, fan_out))
        values[f"b{i + 1}"] = np.zeros(fan_out)
    return values


class MlpModel:
    """ReLU MLP with softmax output; parameters are requires-grad leaves."""

    def __init__(self, layer_sizes: Sequence[int], values: dict[str, np.ndarray]):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        expected = _layer_param_shapes(self.layer_sizes)
        self.params: list[Param] = []
        for name, shape in expected:
            arr = values[name]
            if arr.shape != shape:
                raise ShapeError(f"param {name}: expected shape {shape}, got {arr.shape}")
            self.params.append(Param(name, T.Tensor(arr, requires_grad=True)))
        self._by_name = {p.name: p.tensor for p in self.params}

    def param(self, name: str) -> T.Tensor:
        return self._by_name[name]

    def forward(self, tape: T.Tape | None, batch) -> T.Tensor:
        """Softmax probabilities per row; recorded on ``tape`` unless None."""
        x = batch if isinstance(batch, T.Tensor) else T.Tensor(batch)
        if x.values.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ShapeError(
                f"input width {x.shape} does not match model input {self.layer_sizes[0]}"
            )
        return _mlp_pipeline(tape, self.layer_sizes, self._by_name, x)


def _mlp_pipeline(tape, layer_sizes, tensors_by_name, x: T.Tensor) -> T.Tensor:
    h = x
    n_layers = len(layer_sizes) - 1
    for i in range(1, n_layers + 1):
        z = T.add_row(tape, T.matmul(tape, h, tensors_by_name[f"w{i}"]), tensors_by_name[f"b{i}"])
        h = T.relu(tape, z) if i < n_layers else z
    return T.softmax(tape, h)


def mlp_init(layer_sizes: Sequence[int], seed: int) -> MlpModel:
    """Fresh model, fully determined by (layer_sizes, seed)."""
    if len(layer_sizes) < 2:
        raise ShapeError("need at least input and output layer sizes")
    if any(int(s) < 1 for s in layer_sizes):
        raise ShapeError(f"layer sizes must be >= 1, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    return MlpModel(layer_sizes, glorot_uniform_values(layer_sizes, rng))


def snapshot(model: MlpModel, step: int, origin: SnapshotOrigin) -> ParamSnapshot:
    """Deep copy of the model's current parameter values."""
    return ParamSnapshot(
        step=int(step),
        origin=origin,
        entries={p.name: p.tensor.values.copy() for p in model.params},
    )


def random_snapshot(layer_sizes: Sequence[int], rng: np.random.Generator) -> ParamSnapshot:
    """Random-origin guidance state, drawn from the caller's own stream."""
    return ParamSnapshot(
        step=0,
        origin=SnapshotOrigin.RANDOM_INIT,
        entries=glorot_uniform_values(layer_sizes, rng),
    )


def forward_frozen(snap: ParamSnapshot, layer_sizes: Sequence[int], batch) -> T.Tensor:
    """Forward pass from snapshot values with no gradient recording.

    The result is a constant with respect to any live model: it carries no
    tape linkage, so no gradient can flow into the snapshot.
    """
    expected = dict(_layer_param_shapes(tuple(int(s) for s in layer_sizes)))
    if set(snap.entries) != set(expected):
        raise ShapeError(f"snapshot entries {sorted(snap.entries)} do not match template")
    for name, shape in expected.items():
        if snap.entries[name].shape != shape:
            raise ShapeError(f"snapshot entry {name}: shape {snap.entries[name].shape} != {shape}")
    x = batch if isinstance(batch, T.Tensor) else T.Tensor(batch)
    if x.values.ndim != 2 or x.shape[1] != layer_sizes[0]:
        raise ShapeError(f"input width {x.shape} does not match template input {layer_sizes[0]}")
    constants = {name: T.Tensor(arr) for name, arr in snap.entries.items()}
    return _mlp_pipeline(None, tuple(layer_sizes), constants, x)


# ---------------------------------------------------------------------------
# Snapshot serialization
# ---------------------------------------------------------------------------
# Flat little-endian binary: magic "RSNP", u32 version, u64 step, u8 origin,
# u32 entry count; per entry u16 name length + UTF-8 name, u8 rank,
# u32 dims[rank], f64 values.

def save_snapshot(snap: ParamSnapshot, path) -> None:
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<IQBI", SNAPSHOT_VERSION, snap.step, snap.origin.value,
                            len(snap.entries)))
        for name, arr in snap.entries.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"snapshot file ended early (wanted {n} bytes, got {len(data)})")
    return data


def load_snapshot(path) -> ParamSnapshot:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"bad snapshot magic {magic!r}")
        version, step, origin_code, count = struct.unpack("<IQBI", _read_exact(f, 17))
        if version != SNAPSHOT_VERSION:
            raise DataFormatError(f"unsupported snapshot version {version}")
        try:
            origin = SnapshotOrigin(origin_code)
        except ValueError:
            raise DataFormatError(f"unknown snapshot origin code {origin_code}") from None
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            n_values = int(np.prod(dims)) if rank else 1
            raw = _read_exact(f, 8 * n_values)
            entries[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
        trailing = f.read(1)
        if trailing:
            raise DataFormatError("trailing bytes after snapshot payload")
    return ParamSnapshot(step=step, origin=origin, entries=entries)
