"""Dataset loading (IDX binary format), synthetic blobs, seeded batching.

IDX is the big-endian container used to distribute MNIST-family image
files: u32 magic (0x803 images / 0x801 labels), big-endian u32 dimension
fields, then raw u8 payload. Pixels are scaled to [0, 1]; images are
flattened row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, CountMismatchError, ShapeError, TruncatedFileError
from .tensor import Tensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Immutable-by-convention sample store: inputs [count, n], int labels."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(
                f"{self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels outside [0, {self.class_count})")

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[indices], self.labels[indices], self.class_count)


def _read_exact(f, n: int, path) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"{path}: expected {n} more bytes, got {len(data)}")
    return data


def _read_idx_u8(path, expected_magic: int, expected_ndim: int) -> np.ndarray:
    with open(path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path))
        if magic != expected_magic:
            raise BadMagicError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        dims = struct.unpack(f">{expected_ndim}I", _read_exact(f, 4 * expected_ndim, path))
        n_bytes = int(np.prod(dims))
        payload = _read_exact(f, n_bytes, path)
        if f.read(1):
            raise TruncatedFileError(f"{path}: trailing bytes after declared payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair; pixels scaled by 1/255."""
    images = _read_idx_u8(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx_u8(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    count = images.shape[0]
    flat = images.reshape(count, -1).astype(np.float64) / 255.0
    labels64 = labels.astype(np.int64)
    class_count = int(labels64.max()) + 1 if count else 0
    return Dataset(flat, labels64, class_count)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a u8 [count, rows, cols] array in IDX image format."""
    arr = np.ascontiguousarray(images, dtype=np.uint8)
    if arr.ndim != 3:
        raise ShapeError(f"images must be [count, rows, cols], got {arr.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *arr.shape))
        f.write(arr.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    arr = np.ascontiguousarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got {arr.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, arr.shape[0]))
        f.write(arr.tobytes())


# ---------------------------------------------------------------------------
# Synthetic blobs
# ---------------------------------------------------------------------------

# Minimum center separation in units of spread; 4.05 keeps the pairwise
# Bayes overlap near the few-percent range while satisfying the
# >= 4*spread placement contract with margin. Centers never sit closer
# than unit scale, so shrinking the spread separates the classes cleanly.
_CENTER_SEP_FACTOR = 4.05
_CENTER_MIN_EDGE = 1.0


def _simplex_centers(k: int, dims: int, rng: np.random.Generator, edge: float) -> np.ndarray:
    """k points in R^dims, pairwise distance exactly ``edge``, randomly rotated."""
    # vertices e_1..e_k of R^k have pairwise distance sqrt(2); center and
    # project onto the (k-1)-dim subspace they span
    verts = np.eye(k) - 1.0 / k
    q, _ = np.linalg.qr(verts[:, : k - 1] if k > 1 else np.ones((k, 1)))
    coords = verts @ q  # [k, k-1]
    coords *= edge / np.sqrt(2.0)
    centers = np.zeros((k, dims))
    centers[:, : k - 1] = coords
    gauss = rng.standard_normal((dims, dims))
    rot, r = np.linalg.qr(gauss)
    rot *= np.sign(np.diag(r))
    return centers @ rot.T


def _rejection_centers(k: int, dims: int, rng: np.random.Generator, edge: float) -> np.ndarray:
    box = edge * max(2.0, k ** (1.0 / dims))
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < k:
        attempts += 1
        if attempts > 20000:
            box *= 1.5
            attempts = 0
            centers = []
        cand = rng.uniform(-box, box, size=dims)
        if all(np.linalg.norm(cand - c) >= edge for c in centers):
            centers.append(cand)
    return np.asarray(centers)


def gen_blobs(k_classes: int, dims: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs around well-separated class centers.

    Centers sit on a randomly rotated regular simplex (pairwise distance
    ~4 spreads, giving a few percent of class overlap) when k <= dims+1,
    falling back to rejection sampling otherwise. Deterministic by seed.
    """
    if k_classes < 2:
        raise ShapeError(f"need at least 2 classes, got {k_classes}")
    if per_class < 1:
        raise ShapeError(f"per_class must be >= 1, got {per_class}")
    if spread <= 0:
        raise ShapeError(f"spread must be positive, got {spread}")
    if dims < 1:
        raise ShapeError(f"dims must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    edge = max(_CENTER_SEP_FACTOR * spread, _CENTER_MIN_EDGE)
    if k_classes <= dims + 1:
        centers = _simplex_centers(k_classes, dims, rng, edge)
    else:
        centers = _rejection_centers(k_classes, dims, rng, edge)
    labels = np.repeat(np.arange(k_classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((k_classes * per_class, dims)) * spread
    inputs = centers[labels] + noise
    return Dataset(inputs, labels, k_classes)


# ---------------------------------------------------------------------------
# Seeded batching
# ---------------------------------------------------------------------------

class BatchPlan:
    """One shuffle per epoch, fully determined by (seed, count, epochs)."""

    def __init__(self, seed: int, batch_size: int, count: int, epochs: int):
        if batch_size < 1:
            raise ShapeError(f"batch_size must be >= 1, got {batch_size}")
        if count < 1:
            raise ShapeError(f"count must be >= 1, got {count}")
        self.seed = int(seed)
        self.batch_size = int(batch_size)
        self.count = int(count)
        self.epochs = int(epochs)
        rng = np.random.default_rng(seed)
        self._perms = [rng.permutation(count) for _ in range(epochs)]

    def permutation(self, epoch: int) -> np.ndarray:
        if not 0 <= epoch < self.epochs:
            raise IndexError(f"epoch {epoch} outside plan of {self.epochs} epochs")
        return self._perms[epoch]

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.count // self.batch_size)


def batches(dataset: Dataset, plan: BatchPlan, epoch: int):
    """Yield (inputs Tensor[b, n], labels int64[b]) covering every index once."""
    perm = plan.permutation(epoch)
    b = plan.batch_size
    for start in range(0, plan.count, b):
        idx = perm[start:start + b]
        yield Tensor(dataset.inputs[idx]), dataset.labels[idx]
