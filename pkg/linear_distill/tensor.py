"""Dense float64 tensors with tape-based reverse-mode differentiation

Every differentiable operation is a `Function` subclass. Applying a function
to tensors that require gradients records a `Node` on the output tensor; the
nodes reachable from a scalar loss form the `Graph` that `backward` walks in
reverse creation order.

Broadcasting is limited to scalar-vs-tensor. Row/column expansion is an
explicit operation (`expand`) so that shape bugs surface as `ShapeError`.
"""

import contextlib
import itertools
import logging
import math
import weakref
from collections.abc import Callable, Iterator, Sequence
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, ClassVar, Union

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]
Scalar = Union[int, float]
Shape = tuple[int, ...]

logger = logging.getLogger(__name__)

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)
_active_meter: ContextVar["AllocationMeter | None"] = ContextVar(
    "allocation_meter", default=None
)
_node_ids = itertools.count()

GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class GradientError(RuntimeError):
    pass


class AllocationMeter:
    """Accounts bytes of float buffers allocated while the meter is active

    Only buffers that own their memory are counted (numpy views are free).
    An array already being tracked is not counted twice.
    A buffer is released when it is garbage collected, so `peak_bytes`
    is the high-water mark of simultaneously live tracked buffers.
    """

    def __init__(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0
        self.total_bytes = 0
        self._live_ids: set[int] = set()

    def track(self, array: npt.NDArray[Any]) -> None:
        if array.base is not None or id(array) in self._live_ids:
            return
        self._live_ids.add(id(array))
        nbytes = int(array.nbytes)
        self.live_bytes += nbytes
        self.total_bytes += nbytes
        self.peak_bytes = max(self.peak_bytes, self.live_bytes)
        weakref.finalize(array, self._release, id(array), nbytes)

    def _release(self, key: int, nbytes: int) -> None:
        self._live_ids.discard(key)
        self.live_bytes -= nbytes


@contextlib.contextmanager
def measure_allocations() -> Iterator[AllocationMeter]:
    meter = AllocationMeter()
    token = _active_meter.set(meter)
    try:
        yield meter
    finally:
        _active_meter.reset(token)


def track_allocation(array: npt.NDArray[Any]) -> None:
    """Report a kernel-internal buffer to the active meter, if any"""
    meter = _active_meter.get()
    if meter is not None:
        meter.track(array)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def _check_finite(array: Array, where: str) -> None:
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(
            f"{where} produced {bad} non-finite value(s) in shape {array.shape}"
        )


class Tensor:
    """Dense float64 value with an optional gradient buffer"""

    def __init__(self, data: Any, requires_grad: bool = False) -> None:
        array = np.array(data, dtype=np.float64)
        _check_finite(array, "Tensor()")
        self.data: Array = array
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._node: Node | None = None
        track_allocation(array)

    @classmethod
    def _from_op(cls, data: Array, node: "Node | None") -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = node is not None
        out.grad = None
        out._node = node
        track_allocation(data)
        return out

    @property
    def shape(self) -> Shape:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> Array:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data, None)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor | Scalar") -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Scalar) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: "Tensor | Scalar") -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Scalar) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: "Tensor | Scalar") -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other: Scalar) -> "Tensor":
        return scale(self, other)

    def __truediv__(self, other: "Tensor | Scalar") -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass(eq=False)
class Node:
    """One recorded primitive: the op, its inputs and saved activations"""

    id: int
    function: "Function"
    inputs: tuple[Tensor, ...]

    @property
    def op(self) -> str:
        return self.function.name


@dataclass(frozen=True)
class Graph:
    """Primitive ops reachable from an output, in topological order"""

    nodes: tuple[Node, ...] = field(default_factory=tuple)

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        seen: dict[int, Node] = {}
        stack = [output._node] if output._node is not None else []
        while stack:
            node = stack.pop()
            if node.id in seen:
                continue
            seen[node.id] = node
            for inp in node.inputs:
                if inp._node is not None and inp._node.id not in seen:
                    stack.append(inp._node)
        # node ids grow with creation time and inputs always exist
        # before their consumer, so id order is a topological order
        return cls(nodes=tuple(seen[i] for i in sorted(seen)))

    def ops(self) -> list[str]:
        return [node.op for node in self.nodes]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into `.grad` of every leaf requiring grad"""
    if loss.size != 1:
        raise GradientError(
            f"backward() needs a scalar output, got shape {loss.shape}"
        )
    if not loss.requires_grad:
        raise GradientError("backward() on a tensor that does not require grad")
    seed = np.ones_like(loss.data)
    if loss._node is None:
        _accumulate_leaf(loss, seed)
        return
    graph = Graph.trace(loss)
    pending: dict[int, Array] = {loss._node.id: seed}
    for node in reversed(graph.nodes):
        grad = pending.pop(node.id, None)
        if grad is None:
            continue
        with np.errstate(all="ignore"):
            input_grads = node.function.backward(grad)
        for inp, raw_grad in zip(node.inputs, input_grads):
            if raw_grad is None or not inp.requires_grad:
                continue
            inp_grad = np.asarray(raw_grad, dtype=np.float64)
            if inp_grad.shape != inp.data.shape:
                raise ShapeError(
                    f"{node.op} backward produced shape {inp_grad.shape} "
                    f"for an input of shape {inp.data.shape}"
                )
            _check_finite(inp_grad, f"{node.op} backward")
            if inp._node is None:
                _accumulate_leaf(inp, inp_grad)
            elif inp._node.id in pending:
                pending[inp._node.id] = pending[inp._node.id] + inp_grad
            else:
                pending[inp._node.id] = inp_grad


def _accumulate_leaf(leaf: Tensor, grad: Array) -> None:
    if leaf.grad is None:
        leaf.grad = np.array(grad, dtype=np.float64)
    else:
        leaf.grad = leaf.grad + grad


class Function:
    """Base class for differentiable primitives

    `forward` receives the input arrays and stores whatever `backward`
    needs on `self`; `backward` maps d(loss)/d(output) to one gradient
    (or None) per input.
    """

    name: ClassVar[str] = "function"

    def forward(self, *arrays: Array, **kwargs: Any) -> Array:
        raise NotImplementedError

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        fn = cls()
        with np.errstate(all="ignore"):
            out = np.asarray(fn.forward(*(t.data for t in inputs), **kwargs))
        _check_finite(out, cls.name)
        node = None
        if _grad_enabled.get() and any(t.requires_grad for t in inputs):
            node = Node(id=next(_node_ids), function=fn, inputs=inputs)
        return Tensor._from_op(out, node)


def _as_tensor(value: "Tensor | Scalar") -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(float(value))


def _check_elementwise(op: str, a: Array, b: Array) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


def _reduce_to(grad: Array, shape: Shape) -> Array:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum(), dtype=np.float64).reshape(shape)


class _Add(Function):
    name = "add"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _check_elementwise(self.name, a, b)
        self.shapes = (a.shape, b.shape)
        return np.asarray(a + b)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return _reduce_to(grad, self.shapes[0]), _reduce_to(grad, self.shapes[1])


class _Sub(Function):
    name = "sub"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _check_elementwise(self.name, a, b)
        self.shapes = (a.shape, b.shape)
        return np.asarray(a - b)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return _reduce_to(grad, self.shapes[0]), _reduce_to(-grad, self.shapes[1])


class _Mul(Function):
    name = "mul"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _check_elementwise(self.name, a, b)
        self.a, self.b = a, b
        return np.asarray(a * b)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (
            _reduce_to(grad * self.b, self.a.shape),
            _reduce_to(grad * self.a, self.b.shape),
        )


class _Div(Function):
    name = "div"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _check_elementwise(self.name, a, b)
        self.a, self.b = a, b
        return np.asarray(a / b)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (
            _reduce_to(grad / self.b, self.a.shape),
            _reduce_to(-grad * self.a / (self.b * self.b), self.b.shape),
        )


class _Scale(Function):
    name = "scale"

    def forward(self, a: Array, factor: float = 1.0) -> Array:  # type: ignore[override]
        self.factor = factor
        return np.asarray(a * factor)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.factor,)


class _Exp(Function):
    name = "exp"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.out = np.exp(a)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.out,)


class _Log(Function):
    name = "log"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.a = a
        return np.log(a)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad / self.a,)


class _Sqrt(Function):
    name = "sqrt"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * 0.5 / self.out,)


def stable_softplus(x: Array) -> Array:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def stable_sigmoid(x: Array) -> Array:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class _Softplus(Function):
    name = "softplus"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.a = a
        return stable_softplus(a)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * stable_sigmoid(self.a),)


class _Gelu(Function):
    """tanh approximation of GELU"""

    name = "gelu"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.a = a
        self.t = np.tanh(GELU_COEF * (a + GELU_CUBIC * a**3))
        return 0.5 * a * (1.0 + self.t)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        a, t = self.a, self.t
        inner = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * a * a)
        return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * inner),)


class _SmoothL1(Function):
    name = "smooth_l1"

    def forward(self, a: Array, beta: float = 1.0) -> Array:  # type: ignore[override]
        self.a, self.beta = a, beta
        abs_a = np.abs(a)
        return np.where(abs_a < beta, 0.5 * a * a / beta, abs_a - 0.5 * beta)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        a, beta = self.a, self.beta
        return (grad * np.where(np.abs(a) < beta, a / beta, np.sign(a)),)


def _normalize_axis(axis: int | None, ndim: int, op: str) -> int | None:
    if axis is None:
        return None
    if ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"{op}: axis={axis} needs a 2-D tensor, got {ndim}-D")
    return axis


class _Sum(Function):
    name = "sum"

    def forward(  # type: ignore[override]
        self, a: Array, axis: int | None = None
    ) -> Array:
        self.shape = a.shape
        if axis is None:
            return np.asarray(a.sum(), dtype=np.float64)
        return a.sum(axis=axis, keepdims=True)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.broadcast_to(grad, self.shape).copy(),)


class _Mean(Function):
    name = "mean"

    def forward(  # type: ignore[override]
        self, a: Array, axis: int | None = None
    ) -> Array:
        self.shape = a.shape
        self.count = a.size if axis is None else a.shape[axis]
        if axis is None:
            return np.asarray(a.mean(), dtype=np.float64)
        return a.mean(axis=axis, keepdims=True)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class _Expand(Function):
    """Repeat a scalar, an m×1 column or a 1×n row up to a target shape"""

    name = "expand"

    def forward(self, a: Array, shape: Shape = ()) -> Array:  # type: ignore[override]
        ok = a.ndim == 0 or (
            a.ndim == len(shape)
            and all(s == t or s == 1 for s, t in zip(a.shape, shape))
        )
        if not ok:
            raise ShapeError(f"expand: cannot expand {a.shape} to {shape}")
        self.shape = a.shape
        return np.broadcast_to(a, shape).copy()

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        if not self.shape:
            return (np.asarray(grad.sum(), dtype=np.float64),)
        axes = tuple(i for i, s in enumerate(self.shape) if s == 1)
        return (grad.sum(axis=axes, keepdims=True).reshape(self.shape),)


class _Reshape(Function):
    name = "reshape"

    def forward(self, a: Array, shape: Shape = ()) -> Array:  # type: ignore[override]
        if int(np.prod(shape)) != a.size:
            raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}")
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad.reshape(self.shape),)


class _Transpose(Function):
    name = "transpose"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        if a.ndim != 2:
            raise ShapeError(f"transpose needs a 2-D tensor, got shape {a.shape}")
        return np.ascontiguousarray(a.T)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.ascontiguousarray(grad.T),)


class _MatMul(Function):
    name = "matmul"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return grad @ self.b.T, self.a.T @ grad


class _SoftmaxRows(Function):
    name = "softmax_rows"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        if a.ndim != 2:
            raise ShapeError(f"softmax_rows needs a 2-D tensor, got shape {a.shape}")
        e = np.exp(a - a.max(axis=1, keepdims=True))
        self.out = e / e.sum(axis=1, keepdims=True)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        y = self.out
        return (y * (grad - (grad * y).sum(axis=1, keepdims=True)),)


def _row_indices(indices: Sequence[int], rows: int, op: str) -> npt.NDArray[np.intp]:
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise ShapeError(f"{op}: row index out of range for {rows} rows")
    return idx


class _TakeRows(Function):
    name = "take_rows"

    def forward(  # type: ignore[override]
        self, a: Array, indices: Sequence[int] = ()
    ) -> Array:
        if a.ndim != 2:
            raise ShapeError(f"take_rows needs a 2-D tensor, got shape {a.shape}")
        self.shape = a.shape
        self.idx = _row_indices(indices, a.shape[0], self.name)
        return a[self.idx]

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        out = np.zeros(self.shape)
        np.add.at(out, self.idx, grad)
        return (out,)


class _FillRows(Function):
    """Replace the given rows of `a` by a shared 1×n `row`"""

    name = "fill_rows"

    def forward(  # type: ignore[override]
        self, a: Array, row: Array, indices: Sequence[int] = ()
    ) -> Array:
        if a.ndim != 2 or row.shape != (1, a.shape[1]):
            raise ShapeError(f"fill_rows: shapes {a.shape} and {row.shape} mismatch")
        self.idx = _row_indices(indices, a.shape[0], self.name)
        out = a.copy()
        out[self.idx] = row
        return out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        grad_a = grad.copy()
        grad_a[self.idx] = 0.0
        grad_row = grad[self.idx].sum(axis=0, keepdims=True)
        return grad_a, grad_row


class _ConcatRows(Function):
    name = "concat_rows"

    def forward(self, *arrays: Array) -> Array:  # type: ignore[override]
        widths = {a.shape[1] for a in arrays if a.ndim == 2}
        if len(widths) != 1 or any(a.ndim != 2 for a in arrays):
            shapes = [a.shape for a in arrays]
            raise ShapeError(f"concat_rows: incompatible shapes {shapes}")
        self.splits = np.cumsum([a.shape[0] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=0)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return tuple(np.split(grad, self.splits, axis=0))


def add(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return _Add.apply(_as_tensor(a), _as_tensor(b))


def sub(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return _Sub.apply(_as_tensor(a), _as_tensor(b))


def mul(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return _Mul.apply(_as_tensor(a), _as_tensor(b))


def div(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return _Div.apply(_as_tensor(a), _as_tensor(b))


def scale(a: Tensor, factor: float) -> Tensor:
    return _Scale.apply(a, factor=float(factor))


def exp(a: Tensor) -> Tensor:
    return _Exp.apply(a)


def log(a: Tensor) -> Tensor:
    return _Log.apply(a)


def sqrt(a: Tensor) -> Tensor:
    return _Sqrt.apply(a)


def softplus(a: Tensor) -> Tensor:
    return _Softplus.apply(a)


def gelu(a: Tensor) -> Tensor:
    return _Gelu.apply(a)


def smooth_l1(a: Tensor, beta: float = 1.0) -> Tensor:
    if beta <= 0:
        raise ValueError(f"smooth_l1 beta must be positive, got {beta}")
    return _SmoothL1.apply(a, beta=float(beta))


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    return _Sum.apply(a, axis=_normalize_axis(axis, a.ndim, "sum"))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    return _Mean.apply(a, axis=_normalize_axis(axis, a.ndim, "mean"))


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    return _Expand.apply(a, shape=tuple(shape))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return _Reshape.apply(a, shape=tuple(shape))


def transpose(a: Tensor) -> Tensor:
    return _Transpose.apply(a)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _MatMul.apply(a, b)


def softmax_rows(a: Tensor) -> Tensor:
    return _SoftmaxRows.apply(a)


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    return _TakeRows.apply(a, indices=tuple(int(i) for i in indices))


def fill_rows(a: Tensor, row: Tensor, indices: Sequence[int]) -> Tensor:
    return _FillRows.apply(a, row, indices=tuple(int(i) for i in indices))


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return _ConcatRows.apply(*tensors)


def row_norms(a: Tensor) -> Tensor:
    """ℓ2 norm of every row, as an m×1 column"""
    return sqrt(sum(a * a, axis=1))


def normalize_rows(a: Tensor) -> Tensor:
    return a / expand(row_norms(a), a.shape)


def finite_diff_grad(
    f: Callable[[], "Tensor | float"],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> list[Array]:
    """Central-difference estimate of d f / d p for every coordinate of params

    `f` is re-evaluated with one coordinate shifted by ±eps at a time; the
    parameters are restored bit-exactly afterwards.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    estimates: list[Array] = []
    with no_grad():
        for param in params:
            estimate = np.zeros_like(param.data)
            for idx in np.ndindex(*param.data.shape):
                original = float(param.data[idx])
                param.data[idx] = original + eps
                plus = _as_float(f())
                param.data[idx] = original - eps
                minus = _as_float(f())
                param.data[idx] = original
                estimate[idx] = (plus - minus) / (2.0 * eps)
            estimates.append(estimate)
    return estimates


def _as_float(value: "Tensor | float") -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def max_relative_error(analytic: Array, numeric: Array) -> float:
    """max |g_a - g_fd| / max(1, |g_a|) over all coordinates"""
    if analytic.shape != numeric.shape:
        raise ShapeError(
            f"gradient shapes {analytic.shape} and {numeric.shape} differ"
        )
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
