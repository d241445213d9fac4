"""
Tensor Engine

Minimal reverse-mode automatic differentiation over dense numpy arrays.

- Tensors are immutable: their data buffer is read-only after construction.
- Operations record themselves on the innermost active ``Tape``; outside a
  tape they run as plain numpy computations without gradient tracking.
- ``backward`` walks the tape in reverse, accumulating gradients (+=) at fan-in.
- Two precision modes: float32 for training, float64 for gradient checks.
"""

import logging
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.constants import ERROR_MESSAGES
from utils.errors import (
    DetachedTensor,
    EmptyOutput,
    NonFiniteError,
    NotScalar,
    RankError,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

Scalar = Union[int, float]

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_default_dtype = {"value": np.float32}
_local = threading.local()


def get_default_dtype() -> type:
    """Return the numpy dtype new tensors are created with."""
    return _default_dtype["value"]


def set_default_dtype(name: str) -> None:
    """Set the working precision ("float32" or "float64")."""
    if name not in _PRECISIONS:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _default_dtype["value"] = _PRECISIONS[name]
    logger.debug("Default precision set to %s", name)


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the working precision."""
    previous = _default_dtype["value"]
    set_default_dtype(name)
    try:
        yield
    finally:
        _default_dtype["value"] = previous


class Tensor:
    """Dense n-dimensional array participating in a gradient tape."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype or get_default_dtype(), copy=True)
        _check_finite("Tensor", arr)
        arr.setflags(write=False)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._op: Optional["_Op"] = None

    @classmethod
    def from_array(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt ``arr`` without copying it; the array becomes read-only."""
        tensor = cls.__new__(cls)
        arr.setflags(write=False)
        tensor.data = arr
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor._op = None
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return transpose2d(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the data."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        return detach(self)

    def backward(self, tape: "Tape") -> None:
        backward(self, tape)

    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __neg__(self):
        return elementwise("scale", self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise("hadamard", self, other)
        return elementwise("scale", self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other: Scalar):
        return elementwise("scale", self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


@dataclass(eq=False)
class _Op:
    """One executed operation on a tape."""

    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of executed operations; use as a context manager."""

    def __init__(self):
        self.ops: List[_Op] = []
        self._op_ids = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def record(self, op: _Op) -> None:
        self.ops.append(op)
        self._op_ids.add(id(op))

    def __len__(self) -> int:
        return len(self.ops)

    def __contains__(self, tensor: Tensor) -> bool:
        return tensor._op is not None and id(tensor._op) in self._op_ids


def _tape_stack() -> List[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def _active_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(ERROR_MESSAGES["NON_FINITE"].format(op=op))


def _emit(
    name: str,
    out: np.ndarray,
    inputs: Sequence[Tensor],
    grad_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result and record it on the active tape when gradients are needed."""
    _check_finite(name, out)
    result = Tensor.from_array(out)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        op = _Op(name=name, inputs=tuple(inputs), output=result, backward=grad_fn)
        result._op = op
        tape.record(op)
    return result


def _require_rank(op: str, x: Tensor, rank: int) -> None:
    if x.ndim != rank:
        raise RankError(ERROR_MESSAGES["RANK_ERROR"].format(op=op, expected=rank, shape=x.shape))


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op=op, left=a.shape, right=b.shape))


def detach(x: Tensor) -> Tensor:
    """Return a constant view of ``x`` that is cut off from the tape."""
    return Tensor.from_array(x.data)


def backward(loss: Tensor, tape: Tape) -> None:
    """
    Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Raises:
        NotScalar: loss is not rank 0
        DetachedTensor: loss was not produced by an op recorded on ``tape``
    """
    if loss.ndim != 0:
        raise NotScalar(ERROR_MESSAGES["NOT_SCALAR"].format(shape=loss.shape))
    if loss not in tape:
        raise DetachedTensor(ERROR_MESSAGES["DETACHED_TENSOR"])

    grads = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for op in reversed(tape.ops):
        upstream = grads.get(id(op.output))
        if upstream is None:
            continue
        for tensor, grad in zip(op.inputs, op.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad
                owners[key] = tensor

    for key, grad in grads.items():
        tensor = owners[key]
        tensor.grad = grad if tensor.grad is None else tensor.grad + grad
    logger.debug("backward: %d ops, %d gradients", len(tape), len(grads))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of rank-2 tensors."""
    _require_rank("matmul", a, 2)
    _require_rank("matmul", b, 2)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="matmul", left=a.shape, right=b.shape))

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", a.data @ b.data, (a, b), grad_fn)


def transpose2d(x: Tensor) -> Tensor:
    _require_rank("transpose2d", x, 2)
    return _emit("transpose2d", np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.data.size:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="reshape", left=x.shape, right=shape))
    source_shape = x.shape
    return _emit("reshape", x.data.reshape(shape).copy(), (x,), lambda g: (g.reshape(source_shape),))


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    _require_rank("softmax_rows", x, 2)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _emit("softmax_rows", y, (x,), grad_fn)


def conv_output_size(size: int, kernel: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    Dilated, strided 2-D cross-correlation (no kernel flip) with zero padding.

    Args:
        x: input C_in×H×W
        kernel: C_out×C_in×kh×kw
        bias: optional C_out vector
    """
    _require_rank("conv2d", x, 3)
    _require_rank("conv2d", kernel, 4)
    c_in, height, width = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="conv2d", left=x.shape, right=kernel.shape))
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="conv2d bias", left=bias.shape, right=(c_out,)))

    out_h = conv_output_size(height, kh, stride, dilation, padding)
    out_w = conv_output_size(width, kw, stride, dilation, padding)
    if out_h < 1 or out_w < 1:
        raise EmptyOutput(ERROR_MESSAGES["EMPTY_OUTPUT"].format(h=out_h, w=out_w, shape=x.shape))

    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    row_span = stride * (out_h - 1) + 1
    col_span = stride * (out_w - 1) + 1
    taps = [(i, j, i * dilation, j * dilation) for i in range(kh) for j in range(kw)]

    cols = np.empty((c_in, kh, kw, out_h, out_w), dtype=x.dtype)
    for i, j, r0, c0 in taps:
        cols[:, i, j] = padded[:, r0:r0 + row_span:stride, c0:c0 + col_span:stride]

    out = np.tensordot(kernel.data, cols, axes=([1, 2, 3], [0, 1, 2]))
    if bias is not None:
        out = out + bias.data[:, None, None]

    def grad_fn(g):
        d_kernel = np.tensordot(g, cols, axes=([1, 2], [3, 4]))
        d_cols = np.tensordot(kernel.data, g, axes=([0], [0]))
        d_padded = np.zeros_like(padded)
        for i, j, r0, c0 in taps:
            d_padded[:, r0:r0 + row_span:stride, c0:c0 + col_span:stride] += d_cols[:, i, j]
        d_x = d_padded[:, padding:padding + height, padding:padding + width]
        if bias is None:
            return d_x, d_kernel
        return d_x, d_kernel, g.sum(axis=(1, 2))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _emit("conv2d", out, inputs, grad_fn)


def elementwise(kind: str, a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    """
    Pointwise add, sub, hadamard (⊙) or scale.

    ``b`` may be a Python scalar for every kind; ``scale`` requires it.
    """
    if isinstance(b, Tensor):
        if kind == "scale":
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="scale", left=a.shape, right="scalar"))
        _require_same_shape(kind, a, b)
        if kind == "add":
            return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))
        if kind == "sub":
            return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))
        if kind == "hadamard":
            return _emit("hadamard", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
        raise ValueError(f"unknown elementwise kind {kind!r}")

    value = float(b)
    if kind == "add":
        return _emit("add", a.data + value, (a,), lambda g: (g,))
    if kind == "sub":
        return _emit("sub", a.data - value, (a,), lambda g: (g,))
    if kind in ("hadamard", "scale"):
        return _emit(kind, a.data * value, (a,), lambda g: (g * value,))
    raise ValueError(f"unknown elementwise kind {kind!r}")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack channels of ``a`` then ``b`` (both C×H×W with equal H, W)."""
    _require_rank("concat_channels", a, 3)
    _require_rank("concat_channels", b, 3)
    if a.shape[1:] != b.shape[1:]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="concat_channels", left=a.shape, right=b.shape))
    split = a.shape[0]
    out = np.concatenate([a.data, b.data], axis=0)
    return _emit("concat_channels", out, (a, b), lambda g: (g[:split], g[split:]))


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar."""
    shape = x.shape
    return _emit("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, g, dtype=x.dtype),))


def mse(y: Tensor, target: Tensor, n: int) -> Tensor:
    """Squared L2 norm of ``y - target`` divided by ``n``."""
    _require_same_shape("mse", y, target)
    diff = y.data - target.data
    value = np.array((diff * diff).sum() / n, dtype=y.dtype)

    def grad_fn(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return _emit("mse", value, (y, target), grad_fn)


def l2_norm(w: Tensor) -> Tensor:
    """Euclidean norm of all elements; the gradient at zero is defined as zero."""
    norm = np.sqrt((w.data * w.data).sum())

    def grad_fn(g):
        if norm == 0:
            return (np.zeros_like(w.data),)
        return (g * w.data / norm,)

    return _emit("l2_norm", np.array(norm, dtype=w.dtype), (w,), grad_fn)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    positive = x.data > 0
    out = np.where(positive, x.data, slope * x.data)
    return _emit("leaky_relu", out, (x,), lambda g: (np.where(positive, g, slope * g),))


def bilinear_matrix(in_size: int, out_size: int, align_corners: bool, dtype=None) -> np.ndarray:
    """
    Interpolation matrix R (out_size×in_size) such that ``R @ v`` resamples ``v``.

    ``align_corners`` maps the first and last samples onto each other; otherwise
    half-pixel centres are used and sources are clamped to the valid range.
    """
    dtype = dtype or get_default_dtype()
    idx = np.arange(out_size, dtype=np.float64)
    if align_corners:
        src = idx * (in_size - 1) / (out_size - 1) if out_size > 1 else np.zeros(out_size)
    else:
        src = np.clip((idx + 0.5) * in_size / out_size - 0.5, 0, in_size - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    np.add.at(matrix, (np.arange(out_size), lo), 1.0 - frac)
    np.add.at(matrix, (np.arange(out_size), hi), frac)
    return matrix.astype(dtype)


def resize_bilinear(x: Tensor, out_hw: Tuple[int, int], align_corners: bool) -> Tensor:
    """Separable bilinear resampling of a C×H×W tensor to C×out_h×out_w."""
    _require_rank("resize_bilinear", x, 3)
    rows = bilinear_matrix(x.shape[1], out_hw[0], align_corners, x.dtype)
    cols = bilinear_matrix(x.shape[2], out_hw[1], align_corners, x.dtype)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def grad_fn(g):
        return (np.matmul(rows.T, np.matmul(g, cols)),)

    return _emit("resize_bilinear", out, (x,), grad_fn)
