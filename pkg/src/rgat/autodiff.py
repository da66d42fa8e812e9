"""Dense reverse-mode automatic differentiation on top of numpy.

Every :class:`Tensor` produced by an operation remembers its inputs and a
closure that pushes the output gradient back to them.  Calling
:meth:`Tensor.backward` linearises the graph into a :class:`Tape` (a
topologically ordered list of nodes) and walks it in reverse.

All arithmetic is float64.
"""
from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward: implicit seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        Tape.from_output(self).backward(self, grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Topologically ordered record of the nodes that lead to an output."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order, seen = [], set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and _tracks(p):
                    stack.append((p, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def backward(self, out: Tensor, grad: np.ndarray):
        grads = {id(out): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad += g
                continue
            if node.requires_grad:
                node.grad += g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _tracks(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    parents = tuple(parents)
    if any(_tracks(p) for p in parents):
        return Tensor(data, _parents=parents, _backward=backward, op=op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward, "matmul")


# nonlinearities

def sigmoid(a: Tensor) -> Tensor:
    # tanh form never overflows
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# shape manipulation

def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(out, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(out, tensors, backward, "stack")


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(out, (a,), backward, "getitem")


def take_along(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather ``a`` along ``axis`` with per-position indices (numpy take_along_axis)."""
    indices = np.asarray(indices)
    out = np.take_along_axis(a.data, indices, axis=axis)
    indices = np.broadcast_to(indices, out.shape)

    def backward(g):
        full = np.zeros_like(a.data)
        idx = _along_axis_index(indices, axis, a.ndim)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), backward, "take_along")


def _along_axis_index(indices, axis, ndim):
    axis = axis % ndim
    grids = np.indices(indices.shape, sparse=True)
    return tuple(indices if i == axis else grids[i] for i in range(ndim))


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of ``table`` selected by an integer array of any shape."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(
            f"embedding_lookup: index out of range [0, {table.shape[0]}) "
            f"(got min {indices.min()}, max {indices.max()})")
    out = table.data[indices]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _make(out, (table,), backward, "embedding_lookup")


# reductions

def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# attention / classification helpers

def masked_softmax(scores: Tensor, mask, axis: int = -1) -> Tensor:
    """Softmax over ``axis`` restricted to entries where ``mask`` is true.

    Masked entries are exactly 0.  A row with no unmasked entry is all zeros.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    x = np.where(mask, scores.data, -np.inf)
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.where(mask, np.exp(x - mx), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, z, out=np.zeros_like(e), where=z > 0)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (scores,), backward, "masked_softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    mx = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - mx
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), backward, "log_softmax")


def dropout(t: Tensor, p: float, training: bool, rng: np.random.Generator | int | None = None) -> Tensor:
    """Inverted dropout: zero each element with probability ``p`` and rescale survivors."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return t
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = (rng.random(t.shape) >= p) / (1.0 - p)
    return mul(t, keep)


# verification

def grad_check(loss_fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5,
               n_coords: int = 200, seed: int = 0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the graph on every call and be deterministic.
    Up to ``n_coords`` coordinates are sampled per parameter (all of them if
    the parameter is smaller).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("grad_check: loss is not finite")
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if flat.size > n_coords:
            coords = rng.choice(flat.size, size=n_coords, replace=False)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            fp = loss_fn().item()
            flat[k] = orig - eps
            fm = loss_fn().item()
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("grad_check: loss is not finite under perturbation")
            numeric = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[k]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# checkpoint container
#
# layout: b"RGATCKPT" | uint32 version | uint64 manifest length | manifest JSON (utf-8)
#         | concatenated little-endian float64 payloads in manifest order.
# manifest = {"tensors": [{"name", "shape", "offset", "count"}...], "meta": {...}}

_MAGIC = b"RGATCKPT"
_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    entries, offset, blobs = [], 0, []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
        blobs.append(arr.tobytes())
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(manifest)))
        fh.write(manifest)
        for b in blobs:
            fh.write(b)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, mlen = struct.unpack("<IQ", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    out = {}
    for e in manifest["tensors"]:
        chunk = payload[e["offset"]:e["offset"] + e["count"]]
        out[e["name"]] = chunk.astype(DTYPE).reshape(e["shape"])
    return out, manifest["meta"]
