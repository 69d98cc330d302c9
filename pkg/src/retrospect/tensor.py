"""Dense float64 tensors with per-forward-pass reverse-mode autodiff.

A ``Tape`` records one forward pass. Ops are module-level functions taking
the tape as first argument; passing ``tape=None`` runs the same forward
math without recording (inference / frozen passes). ``backward`` walks the
tape once in reverse topological order and returns a ``GradMap``.

Tapes are intentionally per-pass: a fresh tape per training step keeps
paired runs from cross-contaminating. Parameters (requires-grad leaves)
re-register on whatever tape consumes them next; op outputs belong to
exactly one tape and feeding them into another raises ``TapeError``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, GradientMissingError, ShapeError, TapeError

Array = np.ndarray


class Tensor:
    """Dense float64 array, optionally tracked on a tape.

    ``requires_grad`` marks leaves that want gradients (model parameters).
    Constants (inputs, labels-as-arrays, frozen guidance outputs) keep the
    default ``requires_grad=False`` and never receive gradient buffers.
    """

    __slots__ = ("values", "requires_grad", "tape", "node_id", "_op_output")

    def __init__(self, values, shape: Sequence[int] | None = None, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(d) for d in shape)
            if any(d < 1 for d in shape):
                raise ShapeError(f"all dims must be >= 1, got {shape}")
            if arr.size != math.prod(shape):
                raise ShapeError(
                    f"length mismatch: {arr.size} values for shape {shape} "
                    f"(expected {math.prod(shape)})"
                )
            arr = arr.reshape(shape)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # keep 0-d scalars 0-d
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.tape: Tape | None = None
        self.node_id: int | None = None
        self._op_output = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class GradMap:
    """Gradients from one backward pass, keyed by tape node id."""

    def __init__(self, tape: "Tape", grads: dict[int, Array]):
        self._tape = tape
        self._grads = grads

    def wrt(self, tensor: Tensor) -> Array:
        """Gradient of the backward root with respect to ``tensor``."""
        if tensor.tape is not self._tape or tensor.node_id is None:
            raise GradientMissingError(f"{tensor!r} has no gradient on this tape")
        try:
            return self._grads[tensor.node_id]
        except KeyError:
            raise GradientMissingError(f"{tensor!r} has no gradient entry") from None

    def has(self, tensor: Tensor) -> bool:
        return tensor.tape is self._tape and tensor.node_id in self._grads

    def plus(self, other: "GradMap") -> "GradMap":
        """Entry-wise sum of two maps from the same tape (union of keys)."""
        if other._tape is not self._tape:
            raise TapeError("cannot sum gradient maps from different tapes")
        merged = dict(self._grads)
        for nid, arr in other._grads.items():
            merged[nid] = merged[nid] + arr if nid in merged else arr
        return GradMap(self._tape, merged)


class Tape:
    """Ordered record of one forward pass.

    Nodes append in execution order, which is already topological: every
    parent id precedes its consumers.
    """

    def __init__(self):
        # (parent ids or None per parent, backward fn or None for leaves)
        self._nodes: list[tuple[tuple[int | None, ...], Callable | None]] = []
        self._leaf_shapes: dict[int, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def _register_leaf(self, t: Tensor) -> int:
        nid = len(self._nodes)
        self._nodes.append(((), None))
        self._leaf_shapes[nid] = t.shape
        t.tape = self
        t.node_id = nid
        return nid

    def _record(self, parent_ids: tuple[int | None, ...], backward_fn: Callable, out: Tensor) -> None:
        nid = len(self._nodes)
        self._nodes.append((parent_ids, backward_fn))
        out.tape = self
        out.node_id = nid
        out.requires_grad = True
        out._op_output = True


def _input_ids(tape: Tape | None, tensors: Iterable[Tensor]) -> tuple[int | None, ...] | None:
    """Node ids of each input under ``tape``; None when nothing to record.

    Registers requires-grad leaves lazily. Op outputs from a different tape
    are rejected: intermediates belong to exactly one recording.
    """
    if tape is None:
        for t in tensors:
            if t._op_output and t.tape is not None:
                raise TapeError("op output fed into an untaped computation; detach it first")
        return None
    ids: list[int | None] = []
    tracked = False
    for t in tensors:
        if t.tape is tape and t.node_id is not None:
            ids.append(t.node_id)
            tracked = True
        elif t._op_output and t.tape is not None:
            raise TapeError("tensor recorded on a different tape cannot join this one")
        elif t.requires_grad:
            ids.append(tape._register_leaf(t))
            tracked = True
        else:
            ids.append(None)
    return tuple(ids) if tracked else None


def _emit(tape: Tape | None, inputs: tuple[Tensor, ...], out_values: Array,
          backward_fn: Callable) -> Tensor:
    out = Tensor(out_values)
    ids = _input_ids(tape, inputs)
    if ids is not None:
        tape._record(ids, backward_fn, out)
    return out


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def matmul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dim mismatch: {a.shape} x {b.shape}")
    av, bv = a.values, b.values
    out_values = av @ bv

    def backward_fn(g: Array):
        return (g @ bv.T, av.T @ g)

    return _emit(tape, (a, b), out_values, backward_fn)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _emit(tape, (a, b), a.values + b.values, lambda g: (g, g))


def sub(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _emit(tape, (a, b), a.values - b.values, lambda g: (g, -g))


def scale(tape: Tape | None, a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(tape, (a,), c * a.values, lambda g: (c * g,))


def add_row(tape: Tape | None, a: Tensor, bias: Tensor) -> Tensor:
    """Broadcast-add a [n] bias to every row of a [m,n] tensor."""
    if a.values.ndim != 2 or bias.values.ndim != 1 or a.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_row shapes: {a.shape} + {bias.shape}")
    return _emit(tape, (a, bias), a.values + bias.values,
                 lambda g: (g, g.sum(axis=0)))


def relu(tape: Tape | None, a: Tensor) -> Tensor:
    av = a.values
    return _emit(tape, (a,), kernels.relu_fwd(av),
                 lambda g: (kernels.relu_bwd(av, g),))


def softmax(tape: Tape | None, a: Tensor) -> Tensor:
    """Row softmax; 1-D input is treated as a single row."""
    av = a.values
    squeeze = av.ndim == 1
    rows = av[None, :] if squeeze else av
    if rows.ndim != 2:
        raise ShapeError(f"softmax needs 1-D or 2-D input, got {a.shape}")
    p = kernels.softmax_fwd(np.ascontiguousarray(rows))
    out_values = p[0] if squeeze else p

    def backward_fn(g: Array):
        g2 = g[None, :] if squeeze else g
        dx = kernels.softmax_bwd(p, np.ascontiguousarray(g2))
        return (dx[0] if squeeze else dx,)

    return _emit(tape, (a,), out_values, backward_fn)


def log(tape: Tape | None, a: Tensor) -> Tensor:
    av = a.values
    if av.size and av.min() <= 0.0:
        raise DomainError("log of non-positive input")
    return _emit(tape, (a,), np.log(av), lambda g: (g / av,))


def mean(tape: Tape | None, a: Tensor) -> Tensor:
    av = a.values
    n = av.size
    out_values = np.asarray(av.sum() / n)

    def backward_fn(g: Array):
        return (np.full(av.shape, float(g) / n),)

    return _emit(tape, (a,), out_values, backward_fn)


def l1_dist(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Sum of absolute differences over all elements (scalar output).

    Subgradient convention at kinks: sign(0) = 0.
    """
    _check_same_shape("l1_dist", a, b)
    av, bv = a.values, b.values
    out_values = np.asarray(kernels.l1_total_fwd(av.ravel(), bv.ravel()))

    def backward_fn(g: Array):
        da = kernels.l1_total_bwd(av.ravel(), bv.ravel(), float(g)).reshape(av.shape)
        return (da, -da)

    return _emit(tape, (a, b), out_values, backward_fn)


def l2_dist(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distance over all elements; gradient 0 at coincidence."""
    _check_same_shape("l2_dist", a, b)
    av, bv = a.values, b.values
    dist = kernels.l2_total_fwd(av.ravel(), bv.ravel())

    def backward_fn(g: Array):
        da = kernels.l2_total_bwd(av.ravel(), bv.ravel(), dist, float(g)).reshape(av.shape)
        return (da, -da)

    return _emit(tape, (a, b), np.asarray(dist), backward_fn)


def _check_rows(op: str, a: Tensor, b: Tensor) -> None:
    _check_same_shape(op, a, b)
    if a.values.ndim != 2:
        raise ShapeError(f"{op} needs 2-D input, got {a.shape}")


def l1_dist_rows(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Per-row L1 distance of two [m,n] tensors -> [m]."""
    _check_rows("l1_dist_rows", a, b)
    av, bv = a.values, b.values
    out_values = kernels.l1_rows_fwd(av, bv)

    def backward_fn(g: Array):
        da = kernels.l1_rows_bwd(av, bv, g)
        return (da, -da)

    return _emit(tape, (a, b), out_values, backward_fn)


def l2_dist_rows(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Per-row Euclidean distance of two [m,n] tensors -> [m]."""
    _check_rows("l2_dist_rows", a, b)
    av, bv = a.values, b.values
    dists = kernels.l2_rows_fwd(av, bv)

    def backward_fn(g: Array):
        da = kernels.l2_rows_bwd(av, bv, dists, g)
        return (da, -da)

    return _emit(tape, (a, b), dists, backward_fn)


def cross_entropy(tape: Tape | None, probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of integer labels under row probabilities.

    Probabilities are clamped at 1e-12 before the log; rows must already sum
    to 1 within 1e-9 (softmax output contract).
    """
    pv = probs.values
    if pv.ndim != 2:
        raise ShapeError(f"cross_entropy needs [batch, classes], got {probs.shape}")
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1 or lab.shape[0] != pv.shape[0]:
        raise ShapeError(f"labels shape {lab.shape} does not match batch {pv.shape[0]}")
    if lab.size and (lab.min() < 0 or lab.max() >= pv.shape[1]):
        raise DomainError(f"label out of range [0, {pv.shape[1]})")
    row_sums = pv.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-9:
        raise DomainError("cross_entropy rows must sum to 1 within 1e-9")
    out_values = np.asarray(kernels.xent_fwd(pv, lab))

    def backward_fn(g: Array):
        return (kernels.xent_bwd(pv, lab, float(g)),)

    return _emit(tape, (probs,), out_values, backward_fn)


# ---------------------------------------------------------------------------
# Backward pass and gradient oracles
# ---------------------------------------------------------------------------

def backward(root: Tensor) -> GradMap:
    """Reverse-accumulate gradients of a scalar root over its tape.

    Non-destructive: the same recording supports several backward calls
    with different roots (used to split task and retrospective gradients).
    """
    if root.tape is None or root.node_id is None:
        raise TapeError("backward root is not recorded on a tape")
    if root.values.shape != ():
        raise ShapeError(f"backward root must be scalar, got shape {root.values.shape}")
    tape = root.tape
    grads: list[Array | None] = [None] * len(tape._nodes)
    grads[root.node_id] = np.ones(())
    for nid in range(root.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        parent_ids, backward_fn = tape._nodes[nid]
        if backward_fn is None:
            continue
        for pid, piece in zip(parent_ids, backward_fn(g)):
            if pid is None:
                continue
            grads[pid] = piece if grads[pid] is None else grads[pid] + piece
    out: dict[int, Array] = {nid: g for nid, g in enumerate(grads) if g is not None}
    for nid, shape in tape._leaf_shapes.items():
        if nid not in out:
            out[nid] = np.zeros(shape)
    return GradMap(tape, out)


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error of backward() against central finite differences.

    ``loss_fn`` must rebuild its graph on every call and read the current
    ``params`` values; coordinates are perturbed in place and restored.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    gm = backward(loss_fn())
    analytic = [np.array(gm.wrt(p)) for p in params]
    max_rel = 0.0
    for p, an in zip(params, analytic):
        flat = p.values.ravel()
        an_flat = an.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = loss_fn().item()
            flat[i] = orig - eps
            f_minus = loss_fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(an_flat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(an_flat[i] - numeric) / denom)
    return max_rel


def _random_composite(rng: np.random.Generator, kink_margin: float):
    """One randomized graph (loss_fn, params) mixing the op suite, or None
    when the draw lands within ``kink_margin`` of a relu/L1/L2 kink."""
    batch = int(rng.integers(1, 4))
    depth = int(rng.integers(1, 4))
    sizes = [int(rng.integers(2, 6)) for _ in range(depth + 1)]
    x = Tensor(rng.uniform(-1.5, 1.5, size=(batch, sizes[0])))
    weights = [Tensor(rng.uniform(-1.0, 1.0, size=(sizes[i], sizes[i + 1])), requires_grad=True)
               for i in range(depth)]
    biases = [Tensor(rng.uniform(-0.3, 0.3, size=(sizes[i + 1],)), requires_grad=True)
              for i in range(depth)]
    labels = rng.integers(0, sizes[-1], size=batch)
    target = rng.dirichlet(np.ones(sizes[-1]), size=batch)
    aux_target = Tensor(rng.uniform(-1.0, 1.0, size=(batch, sizes[-1])))
    head = int(rng.integers(0, 4))
    reuse = bool(rng.integers(0, 2))

    def build(check: bool = False) -> Tensor | None:
        tape = Tape()
        h = x
        for d in range(depth):
            z = add_row(tape, matmul(tape, h, weights[d]), biases[d])
            if d < depth - 1:
                if check and np.abs(z.values).min() < kink_margin:
                    return None
                h = relu(tape, z)
            else:
                h = z
        if head == 0:
            loss = cross_entropy(tape, softmax(tape, h), labels)
        elif head == 1:
            p = softmax(tape, h)
            if check and np.abs(p.values - target).min() < kink_margin:
                return None
            loss = l1_dist(tape, p, Tensor(target))
        elif head == 2:
            if check and kernels.l2_total_fwd(h.values.ravel(), aux_target.values.ravel()) < kink_margin:
                return None
            loss = l2_dist(tape, h, aux_target)
        else:
            loss = mean(tape, h)
        if reuse:
            # second consumer of h exercises gradient accumulation
            if check and kernels.l2_total_fwd(h.values.ravel(), aux_target.values.ravel()) < kink_margin:
                return None
            loss = add(tape, loss, scale(tape, l2_dist(tape, h, aux_target), 0.5))
        return loss

    if build(check=True) is None:
        return None
    return build, weights + biases


def gradcheck_suite(n_graphs: int = 20, seed: int = 0, eps: float = 1e-5,
                    kink_margin: float = 0.01) -> tuple[float, list[float]]:
    """Run the finite-difference oracle over randomized composite graphs.

    Draws graphs until ``n_graphs`` of them keep every relu pre-activation
    and distance argument at least ``kink_margin`` from a kink, then
    grad-checks each. Returns (max relative error, per-graph errors).
    """
    rng = np.random.default_rng(seed)
    errors: list[float] = []
    attempts = 0
    while len(errors) < n_graphs:
        attempts += 1
        if attempts > 50 * n_graphs:
            raise RuntimeError("could not sample enough kink-free graphs")
        drawn = _random_composite(rng, kink_margin)
        if drawn is None:
            continue
        loss_fn, params = drawn
        errors.append(grad_check(loss_fn, params, eps=eps))
    return max(errors), errors
