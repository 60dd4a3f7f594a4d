"""Dense-array reverse-mode automatic differentiation.

A :class:`Tensor` wraps a contiguous numpy float array. While a
:class:`GradTape` is active, every primitive records a backward closure;
``tape.backward(loss)`` replays the records in reverse execution order
exactly once and accumulates gradients on every ``requires_grad`` leaf.
With no active tape the same primitives run as plain numpy, which is how
inference and finite-difference probing stay cheap.

Design constraints honoured throughout:

* default compute precision is float32; float64 graphs are supported for
  finite-difference verification,
* every primitive checks its output for NaN/Inf and raises
  :class:`~ringdepth.errors.DomainError` instead of propagating them,
* broadcasting covers leading-dimension expansion, scalar operands and
  size-1 axes; gradients are reduced back to the operand shapes,
* all reductions use a fixed order, so results are bitwise reproducible
  on one machine.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, GraphError

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_tape_stack: list["GradTape"] = []


def _active_tape() -> Optional["GradTape"]:
    return _tape_stack[-1] if _tape_stack else None


def _check_finite(data: np.ndarray, op: str) -> None:
    # One reduction pass: any NaN or Inf makes the float64 sum non-finite.
    with np.errstate(invalid="ignore"):
        total = data.sum(dtype=np.float64) if data.size else 0.0
    if not math.isfinite(total):
        raise DomainError(f"{op} produced non-finite values")


class Tensor:
    """A dense float array, optionally tracked for gradients.

    ``data`` is a numpy array (float32 by default, float64 for
    verification graphs). ``grad`` is populated by
    :meth:`GradTape.backward` on leaves created with
    ``requires_grad=True`` and always has the same shape as ``data``.
    Gradient arrays may alias op outputs; treat them as read-only.
    """

    __slots__ = ("data", "requires_grad", "grad", "_nid", "_tape_token")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        # Lists and scalars default to float32; numpy float arrays keep
        # their precision (float64 is the verification path).
        if dtype is not None:
            arr = np.asarray(data).astype(dtype, copy=False)
        elif isinstance(data, np.ndarray) and data.dtype in _FLOAT_DTYPES:
            arr = data
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._nid = -1
        self._tape_token: Optional["GradTape"] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, op: str,
              check: bool = True) -> "Tensor":
        """Fast construction for op outputs; skips the copy/cast logic."""
        if check:
            _check_finite(data, op)
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t._nid = -1
        t._tape_token = None
        return t

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    # -- operator sugar (implementations live below as free functions) --

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def abs(self):
        return absolute(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sigmoid(self):
        return sigmoid(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def backward(self) -> None:
        backward(self)


class GradTape:
    """Ordered record of executed primitives with their backward closures.

    Use as a context manager around the forward pass::

        with GradTape() as tape:
            loss = model(...)
        tape.backward(loss)

    Replaying backward visits the records in reverse execution order
    exactly once; a second :meth:`backward` call replays again and sums
    into the existing leaf gradients (used for gradient accumulation
    across a batch).
    """

    def __init__(self):
        self._records: list[tuple[int, tuple, Callable]] = []
        self._leaves: dict[int, Tensor] = {}
        self._next_nid = 0

    def __enter__(self) -> "GradTape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._records)

    def _alloc_nid(self) -> int:
        nid = self._next_nid
        self._next_nid += 1
        return nid

    def _input_nid(self, t: Tensor) -> int:
        if not t.requires_grad:
            return -1
        if t._tape_token is not self:
            # First appearance on this tape: the tensor is a leaf here.
            t._nid = self._alloc_nid()
            t._tape_token = self
            self._leaves[t._nid] = t
        return t._nid

    def record(self, out: Tensor, inputs: Sequence[Tensor],
               backward_fn: Callable[[np.ndarray], tuple]) -> None:
        in_nids = tuple(self._input_nid(t) for t in inputs)
        out._nid = self._alloc_nid()
        out._tape_token = self
        self._records.append((out._nid, in_nids, backward_fn))

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(leaf) into every requires_grad leaf."""
        if not isinstance(root, Tensor):
            raise GraphError("backward root must be a Tensor")
        if root.data.shape != ():
            raise GraphError(
                f"backward root must be a scalar, got shape {root.data.shape}")
        if not self._records:
            raise GraphError("cannot run backward on an empty tape")
        if root._tape_token is not self:
            raise GraphError("root was not computed on this tape")

        grads: dict[int, np.ndarray] = {
            root._nid: np.ones((), dtype=root.data.dtype)
        }
        for out_nid, in_nids, backward_fn in reversed(self._records):
            g = grads.pop(out_nid, None)
            if g is None:
                continue
            for nid, gt in zip(in_nids, backward_fn(g)):
                if nid < 0 or gt is None:
                    continue
                acc = grads.get(nid)
                grads[nid] = gt if acc is None else acc + gt
        for nid, g in grads.items():
            leaf = self._leaves.get(nid)
            if leaf is not None:
                leaf.grad = g if leaf.grad is None else leaf.grad + g


def backward(root: Tensor) -> None:
    """Run reverse-mode accumulation from ``root`` on the active tape."""
    tape = _active_tape()
    if tape is None:
        if isinstance(root, Tensor) and root._tape_token is not None:
            tape = root._tape_token
        else:
            raise GraphError("backward requires an active GradTape")
    tape.backward(root)


# ---------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------

def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _same_dtype(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise DomainError(
            f"{op} requires matching dtypes, got {a.data.dtype} and {b.data.dtype}")


def _binary(op: str, a, b, fwd, bwd) -> Tensor:
    if isinstance(a, Tensor):
        b = _as_tensor(b, a.data.dtype)
    else:
        a = _as_tensor(a, b.data.dtype)
    _same_dtype(a, b, op)
    # Overflow becomes inf and is rejected by the finiteness check below;
    # numpy's own warning is redundant noise.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out_data = fwd(a.data, b.data)
    req = a.requires_grad or b.requires_grad
    out = Tensor._wrap(out_data, req, op)
    tape = _active_tape()
    if tape is not None and req:
        a_shape, b_shape = a.data.shape, b.data.shape
        na, nb = a.requires_grad, b.requires_grad
        a_data, b_data = a.data, b.data

        def backward_fn(g):
            ga, gb = bwd(g, a_data, b_data, out_data)
            return (
                _unbroadcast(ga, a_shape) if na else None,
                _unbroadcast(gb, b_shape) if nb else None,
            )

        tape.record(out, (a, b), backward_fn)
    return out


def _unary(op: str, x: Tensor, fwd, bwd, check: bool = True) -> Tensor:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out_data = fwd(x.data)
    out = Tensor._wrap(out_data, x.requires_grad, op, check=check)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        x_data = x.data

        def backward_fn(g):
            return (bwd(g, x_data, out_data),)

        tape.record(out, (x,), backward_fn)
    return out


# ---------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------

def add(a, b) -> Tensor:
    return _binary("add", a, b,
                   lambda ad, bd: ad + bd,
                   lambda g, ad, bd, od: (g, g))


def sub(a, b) -> Tensor:
    return _binary("sub", a, b,
                   lambda ad, bd: ad - bd,
                   lambda g, ad, bd, od: (g, -g))


def mul(a, b) -> Tensor:
    return _binary("mul", a, b,
                   lambda ad, bd: ad * bd,
                   lambda g, ad, bd, od: (g * bd, g * ad))


def div(a, b) -> Tensor:
    def bwd(g, ad, bd, od):
        ga = g / bd
        return ga, -ga * od

    return _binary("div", a, b, lambda ad, bd: ad / bd, bwd)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar (thin wrapper over :func:`mul`)."""
    return mul(x, float(factor))


def neg(x: Tensor) -> Tensor:
    return _unary("neg", x, lambda d: -d, lambda g, xd, od: -g, check=False)


def absolute(x: Tensor) -> Tensor:
    return _unary("abs", x, np.abs,
                  lambda g, xd, od: g * np.sign(xd), check=False)


def exp(x: Tensor) -> Tensor:
    return _unary("exp", x, np.exp, lambda g, xd, od: g * od)


def log(x: Tensor) -> Tensor:
    if x.data.size and x.data.min() <= 0:
        raise DomainError("log requires strictly positive input")
    return _unary("log", x, np.log, lambda g, xd, od: g / xd)


def sqrt(x: Tensor) -> Tensor:
    if x.data.size and x.data.min() <= 0:
        raise DomainError("sqrt requires strictly positive input")
    return _unary("sqrt", x, np.sqrt, lambda g, xd, od: g / (2.0 * od))


def sigmoid(x: Tensor) -> Tensor:
    def fwd(d):
        # exp(-|x|) never overflows; both branches share it.
        e = np.exp(-np.abs(d))
        return np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    return _unary("sigmoid", x, fwd,
                  lambda g, xd, od: g * od * (1.0 - od), check=False)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through the interior."""
    if not lo < hi:
        raise DomainError(f"clip needs lo < hi, got [{lo}, {hi}]")
    return _unary("clip", x, lambda d: np.clip(d, lo, hi),
                  lambda g, xd, od: g * ((xd > lo) & (xd < hi)).astype(g.dtype),
                  check=False)


# ---------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------

def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis=axis)
    return np.broadcast_to(g, shape)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, x.data.ndim)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)
    out = Tensor._wrap(np.asarray(out_data), x.requires_grad, "sum")
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        shape = x.data.shape

        def backward_fn(g):
            return (_expand_reduced(g, shape, axis, keepdims),)

        tape.record(out, (x,), backward_fn)
    return out


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, x.data.ndim)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    out = Tensor._wrap(np.asarray(out_data), x.requires_grad, "mean")
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        shape = x.data.shape
        if axis is None:
            count = x.data.size
        else:
            count = 1
            for a in axis:
                count *= shape[a]
        inv = 1.0 / count

        def backward_fn(g):
            return (_expand_reduced(g * inv, shape, axis, keepdims),)

        tape.record(out, (x,), backward_fn)
    return out


# ---------------------------------------------------------------------
# contraction and normalization
# ---------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``[.., M, K] @ [.., K, P] -> [.., M, P]``.

    Leading batch extents broadcast; gradients are summed back over any
    broadcast dimensions.
    """
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        raise DomainError("matmul operands must be Tensors")
    _same_dtype(a, b, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(
            f"matmul needs rank >= 2 operands, got shapes {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner extents disagree: {a.data.shape} x {b.data.shape}")
    out_data = np.matmul(a.data, b.data)
    req = a.requires_grad or b.requires_grad
    out = Tensor._wrap(out_data, req, "matmul")
    tape = _active_tape()
    if tape is not None and req:
        a_data, b_data = a.data, b.data
        a_shape, b_shape = a.data.shape, b.data.shape
        na, nb = a.requires_grad, b.requires_grad

        def backward_fn(g):
            ga = gb = None
            if na:
                ga = _unbroadcast(np.matmul(g, b_data.swapaxes(-1, -2)), a_shape)
            if nb:
                gb = _unbroadcast(np.matmul(a_data.swapaxes(-1, -2), g), b_shape)
            return ga, gb

        tape.record(out, (a, b), backward_fn)
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction.

    Every slice of the output sums to 1; the result is invariant to a
    constant shift of the input.
    """
    if x.data.ndim < 1 or x.data.shape[-1] == 0:
        raise DimensionError(
            f"softmax_lastdim needs a non-empty last dimension, got shape {x.data.shape}")
    m = x.data.max(axis=-1, keepdims=True)
    out_data = np.subtract(x.data, m)
    np.exp(out_data, out=out_data)
    out_data /= out_data.sum(axis=-1, keepdims=True)
    # Finite input (guaranteed by upstream checks) gives exp(x - max) in
    # (0, 1] and row sums >= 1, so the output needs no finiteness pass.
    out = Tensor._wrap(out_data, x.requires_grad, "softmax_lastdim", check=False)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        def backward_fn(g):
            dot = np.einsum("...ij,...ij->...i", out_data, g)[..., None]
            gx = g - dot
            gx *= out_data
            return (gx,)

        tape.record(out, (x,), backward_fn)
    return out


# ---------------------------------------------------------------------
# shape manipulation (view-like; outputs already verified finite)
# ---------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = x.data.shape
    return _unary("reshape", x,
                  lambda d: d.reshape(shape),
                  lambda g, xd, od: np.ascontiguousarray(g).reshape(orig),
                  check=False)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _unary("transpose", x,
                  lambda d: d.transpose(axes),
                  lambda g, xd, od: g.transpose(inv),
                  check=False)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice ``[start, start+length)`` along ``axis``."""
    axis = axis % x.data.ndim
    extent = x.data.shape[axis]
    if start < 0 or length < 1 or start + length > extent:
        raise DimensionError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} "
            f"of shape {x.data.shape}")
    index = (slice(None),) * axis + (slice(start, start + length),)
    shape = x.data.shape

    def bwd(g, xd, od):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return full

    return _unary("narrow", x, lambda d: d[index], bwd, check=False)


def roll(x: Tensor, shift: int, axis: int) -> Tensor:
    return _unary("roll", x,
                  lambda d: np.roll(d, shift, axis=axis),
                  lambda g, xd, od: np.roll(g, -shift, axis=axis),
                  check=False)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    ref = tensors[0].data.shape
    for t in tensors:
        _same_dtype(tensors[0], t, "concat")
        s = t.data.shape
        if len(s) != len(ref) or s[:axis] + s[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise DimensionError(
                f"concat along axis {axis} needs matching off-axis extents, "
                f"got {ref} and {s}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    out = Tensor._wrap(out_data, req, "concat", check=False)
    tape = _active_tape()
    if tape is not None and req:
        sizes = [t.data.shape[axis] for t in tensors]
        needs = [t.requires_grad for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward_fn(g):
            pieces = []
            for i, need in enumerate(needs):
                if need:
                    sl = (slice(None),) * (axis % g.ndim) + \
                         (slice(offsets[i], offsets[i + 1]),)
                    pieces.append(g[sl])
                else:
                    pieces.append(None)
            return tuple(pieces)

        tape.record(out, tensors, backward_fn)
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack along a fresh axis (reshape + concat composition)."""
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:])
                for t in tensors]
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------

def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)
